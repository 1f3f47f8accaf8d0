"""Report emission: one CSV per analysis, with a PNG rendering alongside.

CSV cells use shortest round-trip float formatting, empty cells for
undefined values, and lowercase true/false for booleans, so byte-identical
reruns are guaranteed by value-identical results. Figures are quick-look
matplotlib renderings of the same tables (Agg backend, fixed size/dpi);
they share the CSV's basename.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .analytics import (
    decile_aggregate,
    group_aggregate,
    positive_disruption_share,
    signed_log,
    spearman_matrix,
    top_cited_share,
    trend_table,
)
from .geometry import LABELS

SIM_FIELDS = ("s_rp", "s_pc", "s_rc")
DIST_FIELDS = ("d_rp", "d_pc", "d_rc")


def fmt_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def write_csv(path, header, rows) -> Path:
    """Write rows (sequences or dicts matching `header`) as CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if isinstance(row, dict):
                writer.writerow([fmt_cell(row.get(col)) for col in header])
            else:
                writer.writerow([fmt_cell(v) for v in row])
    return path


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    _plt().close(fig)


# ---------------------------------------------------------------------------
# individual report tables
# ---------------------------------------------------------------------------

def emit_class_shares(indicators, report_dir, figures=True) -> list:
    n = len(indicators)
    rows = []
    for lab in LABELS:
        count = sum(1 for r in indicators if r.label == lab)
        rows.append({"label": lab, "count": count, "share": count / n if n else 0.0})
    write_csv(Path(report_dir) / "class_shares.csv", ["label", "count", "share"], rows)
    if figures:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.bar([r["label"] for r in rows], [r["share"] for r in rows], color="#4878d0")
        ax.set_ylabel("share of publications")
        ax.set_title("classification shares")
        _save(fig, Path(report_dir) / "class_shares.png")
    return rows


def emit_fig2_box(indicators, report_dir, figures=True) -> list:
    """Disruption distribution per label, plus the positive-d share cells."""
    with_d = [r for r in indicators if r.d is not None]
    shares = positive_disruption_share(
        [r.label for r in with_d], [r.d for r in with_d]
    ) if with_d else {}
    rows = []
    for lab in LABELS:
        ds = np.array([r.d for r in with_d if r.label == lab], dtype=np.float64)
        if len(ds) == 0:
            rows.append({"label": lab, "n": 0})
            continue
        q = np.percentile(ds, [5, 25, 50, 75, 95])
        sl = signed_log(ds)
        rows.append({
            "label": lab, "n": len(ds),
            "d_mean": float(ds.mean()), "d_min": float(ds.min()),
            "d_p05": float(q[0]), "d_p25": float(q[1]), "d_p50": float(q[2]),
            "d_p75": float(q[3]), "d_p95": float(q[4]), "d_max": float(ds.max()),
            "share_positive": shares.get(lab),
            "slog_p25": float(np.percentile(sl, 25)),
            "slog_p50": float(np.percentile(sl, 50)),
            "slog_p75": float(np.percentile(sl, 75)),
        })
    header = ["label", "n", "d_mean", "d_min", "d_p05", "d_p25", "d_p50",
              "d_p75", "d_p95", "d_max", "share_positive",
              "slog_p25", "slog_p50", "slog_p75"]
    write_csv(Path(report_dir) / "fig2_box.csv", header, rows)
    if figures:
        plt = _plt()
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.4))
        stats = []
        for r in rows:
            if r["n"] == 0:
                continue
            stats.append({
                "label": r["label"], "med": r["d_p50"], "q1": r["d_p25"],
                "q3": r["d_p75"], "whislo": r["d_p05"], "whishi": r["d_p95"],
                "fliers": [],
            })
        if stats:
            axes[0].bxp(stats, showfliers=False)
            axes[0].set_ylabel("disruption index d")
        present = [r for r in rows if r["n"] > 0]
        axes[1].bar([r["label"] for r in present],
                    [r["share_positive"] or 0.0 for r in present], color="#d65f5f")
        axes[1].set_ylabel("share with d > 0")
        _save(fig, Path(report_dir) / "fig2_box.png")
    return rows


def emit_fig3_topshare(indicators, report_dir, figures=True, step_pct=0.1) -> list:
    rows = top_cited_share(
        [r.citation_count for r in indicators],
        [r.label for r in indicators],
        [r.id for r in indicators],
        step_pct=step_pct,
    )
    header = ["threshold_pct", "n_top"]
    for lab in LABELS:
        header += [f"share_of_top_{lab}", f"top_rate_{lab}", f"prevalence_{lab}"]
    header.append("baseline_rate")
    write_csv(Path(report_dir) / "fig3_topshare.csv", header, rows)
    if figures and rows:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(6, 3.6))
        xs = [r["threshold_pct"] for r in rows]
        for lab, color in zip(LABELS, ("#d65f5f", "#ee854a", "#4878d0")):
            ax.plot(xs, [r[f"share_of_top_{lab}"] for r in rows], label=lab, color=color)
            ax.axhline(rows[0][f"prevalence_{lab}"], color=color, ls=":", lw=0.8)
        ax.set_xscale("log")
        ax.set_xlabel("top-N% most cited")
        ax.set_ylabel("share of top set")
        ax.legend(fontsize=8)
        _save(fig, Path(report_dir) / "fig3_topshare.png")
    return rows


def emit_fig3_deciles(indicators, report_dir, figures=True,
                      citation_windows=()) -> list:
    """Decile-conditioned means and top-outcome probabilities for the
    reference-citer alignment measures, deciles within publication year."""
    ids = [r.id for r in indicators]
    years = [r.year for r in indicators]
    values = {
        "citations": np.array([r.citation_count for r in indicators], dtype=np.float64),
        "within_field": np.array([r.within_field_citations for r in indicators], dtype=np.float64),
        "cross_field": np.array([r.cross_field_citations for r in indicators], dtype=np.float64),
        "team_size": np.array([r.team_size for r in indicators], dtype=np.float64),
        "p_top5": np.array([1.0 if (r.citation_percentile_in_year or 0) >= 95 else 0.0
                            for r in indicators]),
        "p_top10": np.array([1.0 if (r.citation_percentile_in_year or 0) >= 90 else 0.0
                             for r in indicators]),
        "p_top50": np.array([1.0 if (r.citation_percentile_in_year or 0) >= 50 else 0.0
                             for r in indicators]),
        "p_top_disruption": np.array([
            np.nan if r.disruption_percentile_in_year is None
            else (1.0 if r.disruption_percentile_in_year >= 90 else 0.0)
            for r in indicators]),
    }
    for w in citation_windows:
        values[f"citations_w{w}"] = np.array(
            [r.window_citations.get(int(w), np.nan) for r in indicators], dtype=np.float64
        )
    rows = []
    for key in ("s_rc", "d_rc"):
        key_values = [getattr(r, key) for r in indicators]
        for row in decile_aggregate(key_values, values, ids, strata=years):
            row_out = {"key": key}
            row_out.update(row)
            rows.append(row_out)
    header = ["key", "decile", "n", "mean_key"] + [f"mean_{k}" for k in values]
    write_csv(Path(report_dir) / "fig3_deciles.csv", header, rows)
    if figures and rows:
        plt = _plt()
        fig, axes = plt.subplots(2, 2, figsize=(8, 5.6))
        for col, key in enumerate(("s_rc", "d_rc")):
            sub = [r for r in rows if r["key"] == key and r["n"] > 0]
            xs = [r["decile"] for r in sub]
            axes[0][col].plot(xs, [r["mean_citations"] for r in sub], "o-", color="#4878d0")
            axes[0][col].set_title(f"mean citations by {key} decile")
            for name, color in (("p_top10", "#ee854a"), ("p_top_disruption", "#d65f5f")):
                ys = [r[f"mean_{name}"] for r in sub]
                axes[1][col].plot(xs, ys, "o-", label=name, color=color)
            axes[1][col].set_xlabel(f"{key} decile")
            axes[1][col].legend(fontsize=7)
        _save(fig, Path(report_dir) / "fig3_deciles.png")
    return rows


def emit_fig5_teamsize(indicators, report_dir, figures=True) -> list:
    numeric = {}
    for name in SIM_FIELDS + DIST_FIELDS + ("area",):
        numeric[name] = [getattr(r, name) for r in indicators]
    rows = group_aggregate(
        [r.team_size for r in indicators], numeric, [r.label for r in indicators]
    )
    for row in rows:
        row["team_size"] = row.pop("group")
    header = (["team_size", "n"] + [f"mean_{n}" for n in numeric]
              + [f"share_{lab}" for lab in LABELS])
    write_csv(Path(report_dir) / "fig5_teamsize.csv", header, rows)
    if figures and rows:
        plt = _plt()
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.4))
        xs = [r["team_size"] for r in rows]
        for name in SIM_FIELDS:
            axes[0].plot(xs, [r[f"mean_{name}"] for r in rows], "o-", label=name, ms=3)
        axes[0].set_xlabel("team size")
        axes[0].set_ylabel("mean cosine")
        axes[0].legend(fontsize=8)
        bottom = np.zeros(len(rows))
        for lab, color in zip(LABELS, ("#d65f5f", "#ee854a", "#4878d0")):
            ys = np.array([r[f"share_{lab}"] for r in rows])
            axes[1].bar(xs, ys, bottom=bottom, label=lab, color=color)
            bottom += ys
        axes[1].set_xlabel("team size")
        axes[1].set_ylabel("label share")
        axes[1].legend(fontsize=8)
        _save(fig, Path(report_dir) / "fig5_teamsize.png")
    return rows


def emit_fig6_trends(indicators, report_dir, figures=True, bin_width=5) -> list:
    fields = {}
    for name in SIM_FIELDS + DIST_FIELDS + ("area",):
        fields[name] = [getattr(r, name) for r in indicators]
    rows = trend_table([r.year for r in indicators], fields, bin_width)
    years = np.array([r.year for r in indicators])
    bins = (years // bin_width) * bin_width
    labels_arr = np.array([r.label for r in indicators])
    for row in rows:
        mask = bins == row["bin_start"]
        for lab in LABELS:
            row[f"count_{lab}"] = int(((labels_arr == lab) & mask).sum())
    header = (["bin_start", "n"] + [f"mean_{n}" for n in fields]
              + [f"count_{lab}" for lab in LABELS])
    write_csv(Path(report_dir) / "fig6_trends.csv", header, rows)
    if figures and rows:
        plt = _plt()
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.4))
        sub = [r for r in rows if r["n"] > 0]
        xs = [r["bin_start"] for r in sub]
        for name in SIM_FIELDS:
            axes[0].plot(xs, [r[f"mean_{name}"] for r in sub], "o-", label=name, ms=3)
        axes[0].set_ylabel("mean cosine")
        axes[0].legend(fontsize=8)
        for name in DIST_FIELDS:
            axes[1].plot(xs, [r[f"mean_{name}"] for r in sub], "o-", label=name, ms=3)
        axes[1].set_ylabel("mean distance")
        axes[1].legend(fontsize=8)
        for ax in axes:
            ax.set_xlabel("5-year bin")
        _save(fig, Path(report_dir) / "fig6_trends.png")
    return rows


def emit_fig6_regression(fits, skipped, report_dir, figures=True) -> list:
    from .analytics import REGRESSION_COLUMNS
    rows = []
    for fit in fits:
        row = {
            "outcome": fit.outcome, "window_start": fit.window[0],
            "window_end": fit.window[1] - 1, "tau": fit.tau,
            "n_obs": fit.n_obs, "pinball_loss": fit.pinball_loss,
            "status": "ok",
        }
        for name in REGRESSION_COLUMNS:
            row[f"coef_{name}"] = fit.coefficients[name]
        rows.append(row)
    for (start, end), outcome, reason in skipped:
        rows.append({
            "outcome": outcome, "window_start": start, "window_end": end - 1,
            "status": f"skipped:{reason}",
        })
    rows.sort(key=lambda r: (r["outcome"], r["window_start"]))
    header = (["outcome", "window_start", "window_end", "tau", "n_obs",
               "pinball_loss", "status"]
              + [f"coef_{name}" for name in REGRESSION_COLUMNS])
    write_csv(Path(report_dir) / "fig6_regression.csv", header, rows)
    if figures and fits:
        plt = _plt()
        outcomes = sorted({f.outcome for f in fits})
        fig, axes = plt.subplots(1, len(outcomes), figsize=(4.2 * len(outcomes), 3.4),
                                 squeeze=False)
        for ax, outcome in zip(axes[0], outcomes):
            sub = sorted((f for f in fits if f.outcome == outcome),
                         key=lambda f: f.window[0])
            xs = [f.window[0] for f in sub]
            for name, color in zip(SIM_FIELDS, ("#6acc64", "#ee854a", "#d65f5f")):
                ax.plot(xs, [f.coefficients[name] for f in sub], "o-",
                        label=name, color=color, ms=3)
            ax.axhline(0.0, color="gray", lw=0.6)
            ax.set_title(outcome, fontsize=9)
            ax.set_xlabel("window start")
            ax.legend(fontsize=7)
        _save(fig, Path(report_dir) / "fig6_regression.png")
    return rows


SPEARMAN_FIELDS = ("s_rp", "s_pc", "s_rc", "d_rp", "d_pc", "d_rc", "area",
                   "d", "n_value", "citation_count")


def emit_figS2_spearman(indicators, report_dir, figures=True):
    """Spearman matrix over the semantic and benchmark indicators,
    complete cases only."""
    complete = [
        r for r in indicators
        if r.d is not None and r.n_value is not None
    ]
    if len(complete) < 3:
        write_csv(Path(report_dir) / "figS2_spearman.csv", ["field"], [])
        return [], None
    columns = {
        name: [float(getattr(r, name)) for r in complete] for name in SPEARMAN_FIELDS
    }
    names, matrix = spearman_matrix(columns)
    rows = []
    for i, name in enumerate(names):
        row = {"field": name}
        for j, other in enumerate(names):
            row[other] = float(matrix[i, j])
        rows.append(row)
    write_csv(Path(report_dir) / "figS2_spearman.csv", ["field"] + names, rows)
    if figures:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(5.6, 4.8))
        im = ax.imshow(matrix, vmin=-1, vmax=1, cmap="RdBu_r")
        ax.set_xticks(range(len(names)), names, rotation=60, fontsize=7, ha="right")
        ax.set_yticks(range(len(names)), names, fontsize=7)
        fig.colorbar(im, ax=ax, label="Spearman rho")
        _save(fig, Path(report_dir) / "figS2_spearman.png")
    return names, matrix


def emit_table1_novelty(indicators, report_dir, figures=True) -> list:
    """Label shares split by novelty sign (negative score = high novelty)."""
    groups = (
        ("low_novelty", lambda r: r.n_value is not None and r.n_value >= 0),
        ("high_novelty", lambda r: r.n_value is not None and r.n_value < 0),
    )
    rows = []
    for name, pred in groups:
        subset = [r for r in indicators if pred(r)]
        row = {"novelty_group": name, "n": len(subset)}
        for lab in LABELS:
            row[f"share_{lab}"] = (
                sum(1 for r in subset if r.label == lab) / len(subset)
                if subset else None
            )
        rows.append(row)
    header = ["novelty_group", "n"] + [f"share_{lab}" for lab in LABELS]
    write_csv(Path(report_dir) / "table1_novelty.csv", header, rows)
    if figures:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(5, 3.2))
        x = np.arange(len(LABELS))
        width = 0.38
        for off, row in zip((-width / 2, width / 2), rows):
            ys = [row[f"share_{lab}"] or 0.0 for lab in LABELS]
            ax.bar(x + off, ys, width, label=row["novelty_group"])
        ax.set_xticks(x, LABELS)
        ax.set_ylabel("share within novelty group")
        ax.legend(fontsize=8)
        _save(fig, Path(report_dir) / "table1_novelty.png")
    return rows


REPORT_NAMES = ("class_shares", "fig2_box", "fig3_topshare", "fig3_deciles",
                "fig5_teamsize", "fig6_trends", "fig6_regression",
                "figS2_spearman", "table1_novelty")


def write_report_suite(indicators, fits, skipped_fits, report_dir,
                       figures=True, citation_windows=(), topshare_step=0.1,
                       selection=("all",)) -> list:
    """Emit the selected report tables (plus figures); returns file names.

    `selection` lists report names from REPORT_NAMES, or ("all",).
    """
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    wanted = set(REPORT_NAMES) if "all" in selection else set(selection)
    unknown = wanted - set(REPORT_NAMES)
    if unknown:
        raise ValueError(f"unknown report names: {', '.join(sorted(unknown))}")
    if "class_shares" in wanted:
        emit_class_shares(indicators, report_dir, figures)
    if "fig2_box" in wanted:
        emit_fig2_box(indicators, report_dir, figures)
    if "fig3_topshare" in wanted:
        emit_fig3_topshare(indicators, report_dir, figures, step_pct=topshare_step)
    if "fig3_deciles" in wanted:
        emit_fig3_deciles(indicators, report_dir, figures, citation_windows)
    if "fig5_teamsize" in wanted:
        emit_fig5_teamsize(indicators, report_dir, figures)
    if "fig6_trends" in wanted:
        emit_fig6_trends(indicators, report_dir, figures)
    if "fig6_regression" in wanted:
        emit_fig6_regression(fits, skipped_fits, report_dir, figures)
    if "figS2_spearman" in wanted:
        emit_figS2_spearman(indicators, report_dir, figures)
    if "table1_novelty" in wanted:
        emit_table1_novelty(indicators, report_dir, figures)
    return sorted(p.name for p in report_dir.iterdir())
