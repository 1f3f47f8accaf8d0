"""Statistical analyses over the joined per-publication indicator table.

Conventions, fixed for reproducibility:

* within-group percentiles are average-rank based, scaled as
  100 * rank / (n + 1), so a singleton group sits at 50;
* the signed log transform is sign(d) * ln(1 + 1000 |d|);
* deciles assign sorted records (ties broken by id) to bin
  floor(rank * 10 / n), so bin sizes differ by at most one;
* quantile regression minimizes the mean pinball loss via its exact
  linear-programming formulation (HiGHS); the reported loss is the
  attained mean objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import qr as _qr
from scipy.optimize import linprog
from scipy.stats import rankdata, spearmanr

from .geometry import LABELS


class CollinearDesignError(ValueError):
    """Design matrix is rank-deficient; `columns` names the dependent ones."""

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"collinear design columns: {', '.join(self.columns)}")


class SolverError(RuntimeError):
    """The LP solver failed to certify an optimum."""


# ---------------------------------------------------------------------------
# element-wise utilities
# ---------------------------------------------------------------------------

def percentile_within_group(values, groups) -> np.ndarray:
    """Rank percentile of each value within its group, in [0, 100].

    Average ranks for ties; percentile = 100 * rank / (n + 1).
    """
    values = np.asarray(values, dtype=np.float64)
    groups = np.asarray(groups)
    out = np.empty(len(values), dtype=np.float64)
    for g in np.unique(groups):
        mask = groups == g
        ranks = rankdata(values[mask], method="average")
        out[mask] = 100.0 * ranks / (mask.sum() + 1)
    return out


def signed_log(d):
    """sign(d) * ln(1 + 1000 |d|); odd, zero at zero."""
    d = np.asarray(d, dtype=np.float64)
    result = np.sign(d) * np.log1p(1000.0 * np.abs(d))
    return float(result) if result.ndim == 0 else result


def positive_disruption_share(labels, d_values) -> dict:
    """Fraction of records with d strictly positive, per label."""
    labels = np.asarray(labels)
    d_values = np.asarray(d_values, dtype=np.float64)
    shares = {}
    for label in LABELS:
        mask = labels == label
        if mask.any():
            shares[label] = float((d_values[mask] > 0.0).mean())
    return shares


def field_split_citations(citer_tag_sets, field_tag: str) -> tuple:
    """(within, cross) citer counts by membership of `field_tag` in tags."""
    tag_sets = list(citer_tag_sets)
    within = sum(1 for tags in tag_sets if field_tag in tags)
    return within, len(tag_sets) - within


def top_cited_share(citations, labels, ids, step_pct: float = 0.1) -> list:
    """Label composition of the top-N% most cited, at every `step_pct`.

    Rows carry both readings of "share": `share_of_top_<label>` is the
    label's fraction of the top set (global prevalence is its neutral
    baseline), and `top_rate_<label>` is the fraction of that label's
    records reaching the top set (the threshold N/100 itself is its
    neutral baseline). Ties in citation count break by id.
    """
    citations = np.asarray(citations, dtype=np.float64)
    ids = np.asarray(ids)
    labels = np.asarray(labels)
    n = len(citations)
    if n == 0:
        return []
    order = np.lexsort((ids, -citations))
    sorted_labels = labels[order]
    label_totals = {lab: int((labels == lab).sum()) for lab in LABELS}
    cum = {lab: np.cumsum(sorted_labels == lab) for lab in LABELS}

    rows = []
    steps = int(round(100.0 / step_pct))
    for i in range(1, steps + 1):
        pct = i * step_pct
        k = int(np.ceil(pct / 100.0 * n))
        k = min(max(k, 1), n)
        row = {"threshold_pct": round(pct, 6), "n_top": k}
        for lab in LABELS:
            in_top = int(cum[lab][k - 1])
            row[f"share_of_top_{lab}"] = in_top / k
            row[f"top_rate_{lab}"] = in_top / label_totals[lab] if label_totals[lab] else float("nan")
            row[f"prevalence_{lab}"] = label_totals[lab] / n
        row["baseline_rate"] = pct / 100.0
        rows.append(row)
    return rows


def decile_assign(key_values, ids, n_bins: int = 10) -> np.ndarray:
    """Bin index (0..n_bins-1) per record by sorted key, ties broken by id.

    Bin sizes differ by at most one and sum to n.
    """
    key_values = np.asarray(key_values, dtype=np.float64)
    ids = np.asarray(ids)
    n = len(key_values)
    order = np.lexsort((ids, key_values))
    bins = np.empty(n, dtype=np.int64)
    bins[order] = (np.arange(n) * n_bins) // n
    return bins


def decile_aggregate(key_values, value_arrays: dict, ids, strata=None,
                     n_bins: int = 10) -> list:
    """Per-decile means of each value array, deciles by `key_values`.

    With `strata`, decile membership is computed within each stratum
    (year, field, ...) and records are pooled by decile index across
    strata before averaging.
    """
    key_values = np.asarray(key_values, dtype=np.float64)
    ids = np.asarray(ids)
    n = len(key_values)
    bins = np.empty(n, dtype=np.int64)
    if strata is None:
        bins[:] = decile_assign(key_values, ids, n_bins)
    else:
        strata = np.asarray(strata)
        for s in np.unique(strata):
            mask = strata == s
            bins[mask] = decile_assign(key_values[mask], ids[mask], n_bins)

    rows = []
    for b in range(n_bins):
        mask = bins == b
        row = {"decile": b + 1, "n": int(mask.sum())}
        row["mean_key"] = float(key_values[mask].mean()) if mask.any() else None
        for name, arr in value_arrays.items():
            arr = np.asarray(arr, dtype=np.float64)
            vals = arr[mask]
            vals = vals[~np.isnan(vals)]
            row[f"mean_{name}"] = float(vals.mean()) if len(vals) else None
        rows.append(row)
    return rows


def spearman_matrix(columns: dict) -> tuple:
    """(field names, Spearman rank-correlation matrix), average-rank ties."""
    names = list(columns.keys())
    if len(names) < 2:
        raise ValueError("need at least two fields")
    data = np.column_stack([np.asarray(columns[n], dtype=np.float64) for n in names])
    if data.shape[0] < 3:
        raise ValueError("need at least three records")
    rho = spearmanr(data, axis=0).statistic
    if np.ndim(rho) == 0:  # scipy collapses the 2-field case to a scalar
        rho = np.array([[1.0, float(rho)], [float(rho), 1.0]])
    return names, np.asarray(rho, dtype=np.float64)


# ---------------------------------------------------------------------------
# quantile regression
# ---------------------------------------------------------------------------

def pinball_loss(y, y_hat, tau: float) -> float:
    """Mean check loss at level tau."""
    resid = np.asarray(y, dtype=np.float64) - np.asarray(y_hat, dtype=np.float64)
    return float(np.mean(np.maximum(tau * resid, (tau - 1.0) * resid)))


def _vertex_refine(y, X, tau, beta):
    """Snap the solver's solution onto the interpolating vertex.

    A quantile-regression optimum interpolates p observations; re-solving
    that p x p system removes the LP solver's last-ulp noise (so an
    intercept-only median fit returns a sample value bit-exactly). Kept
    only when the pinball loss does not get worse.
    """
    n, p = X.shape
    idx = np.argsort(np.abs(y - X @ beta))[:p]
    try:
        refined = np.linalg.solve(X[idx], y[idx])
    except np.linalg.LinAlgError:
        return beta
    if not np.isfinite(refined).all():
        return beta
    base = pinball_loss(y, X @ beta, tau)
    if pinball_loss(y, X @ refined, tau) <= base * (1.0 + 1e-9) + 1e-15:
        return refined
    return beta


def _check_rank(X: np.ndarray, column_names) -> None:
    _, r_diag, pivots = _qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r_diag))
    tol = diag[0] * max(X.shape) * np.finfo(np.float64).eps if diag[0] > 0 else 0.0
    rank = int((diag > tol).sum())
    if rank < X.shape[1]:
        bad = [column_names[p] for p in pivots[rank:]]
        raise CollinearDesignError(bad)


def quantile_regression(y, X, tau: float, column_names: Optional[Sequence] = None):
    """Coefficients minimizing the pinball loss, via the exact LP.

    min over (b, u+, u-) of tau*sum(u+) + (1-tau)*sum(u-)
    subject to X b + u+ - u- = y, u+, u- >= 0.

    Returns (beta, mean pinball loss). Raises CollinearDesignError on a
    rank-deficient design and SolverError when HiGHS cannot certify an
    optimum.
    """
    y = np.asarray(y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    if n <= p:
        raise ValueError(f"need more observations ({n}) than parameters ({p})")
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must be in (0, 1)")
    names = list(column_names) if column_names is not None else [f"x{j}" for j in range(p)]
    _check_rank(X, names)

    c = np.concatenate([np.zeros(p), np.full(n, tau), np.full(n, 1.0 - tau)])
    eye = sp.identity(n, format="csr")
    a_eq = sp.hstack([sp.csr_matrix(X), eye, -eye], format="csr")
    bounds = [(None, None)] * p + [(0.0, None)] * (2 * n)
    res = linprog(c, A_eq=a_eq, b_eq=y, bounds=bounds, method="highs")
    if not res.success:
        raise SolverError(f"quantile regression LP failed: {res.message} "
                          f"(status {res.status}, {res.nit} iterations)")
    beta = _vertex_refine(y, X, tau, res.x[:p])
    return beta, pinball_loss(y, X @ beta, tau)


@dataclass
class RegressionFit:
    """One fitted window: outcome name, window bounds, and coefficients."""

    outcome: str
    window: tuple
    tau: float
    coefficients: dict
    pinball_loss: float
    n_obs: int


REGRESSION_CONTROLS = ("has_funding", "n_refs", "year_centered", "team_size")
REGRESSION_COLUMNS = ("intercept", "s_rp", "s_pc", "s_rc") + REGRESSION_CONTROLS


def window_spans(years, window_len: int = 5) -> list:
    """Non-overlapping [start, start+len) spans tiling the year range,
    anchored at the minimum year rounded down to a multiple of the length."""
    years = np.asarray(years)
    lo = int(np.min(years))
    hi = int(np.max(years))
    anchor = (lo // window_len) * window_len
    return [(s, s + window_len) for s in range(anchor, hi + 1, window_len)]


def windowed_regression(indicators, window_len: int = 5, tau: float = 0.5,
                        log_controls: bool = False) -> tuple:
    """Per-window quantile fits for the citation and disruption outcomes.

    Windows with too few observations or a collinear design are skipped
    with a reason; the batch never aborts. Coefficients are reported on
    the raw regressor scale (with `log_controls`, reference count and team
    size enter in logs); publication year is centered within its window.

    Returns (fits, skipped) where skipped rows are (window, outcome, reason).
    """
    rows = [r for r in indicators]
    if not rows:
        return [], []
    count_scale = np.log if log_controls else (lambda v: v)
    fits = []
    skipped = []
    spans = window_spans([r.year for r in rows], window_len)
    outcomes = (
        ("citation_percentile", lambda r: r.citation_percentile_in_year),
        ("disruption_percentile", lambda r: r.disruption_percentile_in_year),
    )
    for start, end in spans:
        in_window = [r for r in rows if start <= r.year < end]
        mid = start + (window_len - 1) / 2.0
        for outcome, getter in outcomes:
            usable = [r for r in in_window if getter(r) is not None]
            if len(usable) <= len(REGRESSION_COLUMNS):
                skipped.append(((start, end), outcome, "too_few_observations"))
                continue
            y = np.array([getter(r) for r in usable], dtype=np.float64)
            X = np.column_stack([
                np.ones(len(usable)),
                [r.s_rp for r in usable],
                [r.s_pc for r in usable],
                [r.s_rc for r in usable],
                [1.0 if r.has_funding else 0.0 for r in usable],
                [count_scale(float(r.n_refs)) for r in usable],
                [r.year - mid for r in usable],
                [count_scale(float(r.team_size)) for r in usable],
            ])
            try:
                beta, loss = quantile_regression(y, X, tau, REGRESSION_COLUMNS)
            except CollinearDesignError as exc:
                skipped.append(((start, end), outcome,
                                "collinear:" + ",".join(exc.columns)))
                continue
            fits.append(RegressionFit(
                outcome=outcome, window=(start, end), tau=tau,
                coefficients=dict(zip(REGRESSION_COLUMNS, beta.tolist())),
                pinball_loss=loss, n_obs=len(usable),
            ))
    return fits, skipped


# ---------------------------------------------------------------------------
# aggregation tables
# ---------------------------------------------------------------------------

def trend_table(years, fields: dict, bin_width: int = 5) -> list:
    """Mean of each field per `bin_width`-year bin, bins at multiples of
    the width. Empty bins between the first and last appear as marker rows
    with n = 0."""
    years = np.asarray(years, dtype=np.int64)
    if len(years) == 0:
        return []
    bins = (years // bin_width) * bin_width
    lo, hi = int(bins.min()), int(bins.max())
    rows = []
    for start in range(lo, hi + 1, bin_width):
        mask = bins == start
        row = {"bin_start": start, "n": int(mask.sum())}
        for name, arr in fields.items():
            arr = np.asarray(arr, dtype=np.float64)
            vals = arr[mask]
            vals = vals[~np.isnan(vals)]
            row[f"mean_{name}"] = float(vals.mean()) if len(vals) else None
        rows.append(row)
    return rows


def group_aggregate(group_values, numeric_fields: dict, labels=None) -> list:
    """Per-group means of numeric fields and, when labels are given,
    label shares that sum to one within each group."""
    group_values = np.asarray(group_values)
    labels = np.asarray(labels) if labels is not None else None
    rows = []
    for g in sorted(np.unique(group_values).tolist()):
        mask = group_values == g
        row = {"group": g, "n": int(mask.sum())}
        for name, arr in numeric_fields.items():
            arr = np.asarray(arr, dtype=np.float64)
            vals = arr[mask]
            vals = vals[~np.isnan(vals)]
            row[f"mean_{name}"] = float(vals.mean()) if len(vals) else None
        if labels is not None:
            n_g = mask.sum()
            for lab in LABELS:
                row[f"share_{lab}"] = float((labels[mask] == lab).sum() / n_g)
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# joined indicator table
# ---------------------------------------------------------------------------

@dataclass
class IndicatorRecord:
    """One publication's joined geometry, disruption, and novelty fields."""

    id: str
    year: int
    team_size: int
    has_funding: bool
    n_refs: int
    citation_count: int
    within_field_citations: int
    cross_field_citations: int
    s_rp: float
    s_pc: float
    s_rc: float
    d_rp: float
    d_pc: float
    d_rc: float
    area: float
    label: str
    n_refs_used: int
    n_cites_used: int
    n_i: Optional[int] = None
    n_j: Optional[int] = None
    n_k: Optional[int] = None
    d: Optional[float] = None
    n_value: Optional[float] = None
    n_pairs: Optional[int] = None
    high_novelty: Optional[bool] = None
    citation_percentile_in_year: Optional[float] = None
    disruption_percentile_in_year: Optional[float] = None
    window_citations: dict = field(default_factory=dict)


def build_indicators(
    loaded,
    geometry_rows,
    disruption_rows,
    novelty_rows,
    citation_windows: Sequence = (),
    field_tag: str = "",
) -> list:
    """Join stage outputs into one indicator row per geometry record.

    Citation counts come from the raw in-edge lists; windowed counts keep
    citers published within `w` years of the focal. Percentiles are
    computed within publication year over this joined set (disruption
    percentiles over records with a defined index only).
    """
    records = loaded.records
    graph = loaded.graph
    disruption_by_id = {r.id: r for r in disruption_rows if r.defined}
    novelty_by_id = {r.id: r for r in novelty_rows}

    rows = []
    for geo in geometry_rows:
        rec = records[geo.id]
        citers = graph.citers(geo.id)
        citer_years = [records[c].year for c in citers if c in records]
        within = 0
        if field_tag:
            within = sum(
                1 for c in citers
                if c in records and field_tag in records[c].field_tags
            )
        row = IndicatorRecord(
            id=geo.id, year=rec.year, team_size=rec.team_size,
            has_funding=rec.has_funding, n_refs=len(rec.reference_ids),
            citation_count=len(citers),
            within_field_citations=within,
            cross_field_citations=len(citers) - within,
            s_rp=geo.s_rp, s_pc=geo.s_pc, s_rc=geo.s_rc,
            d_rp=geo.d_rp, d_pc=geo.d_pc, d_rc=geo.d_rc,
            area=geo.area, label=geo.label,
            n_refs_used=geo.n_refs_used, n_cites_used=geo.n_cites_used,
        )
        for w in citation_windows:
            row.window_citations[int(w)] = sum(
                1 for y in citer_years if y <= rec.year + int(w)
            )
        dis = disruption_by_id.get(geo.id)
        if dis is not None:
            row.n_i, row.n_j, row.n_k, row.d = dis.n_i, dis.n_j, dis.n_k, dis.d
        nov = novelty_by_id.get(geo.id)
        if nov is not None:
            row.n_value = nov.n_value
            row.n_pairs = nov.n_pairs
            row.high_novelty = nov.high_novelty
        rows.append(row)
    rows.sort(key=lambda r: r.id)

    if rows:
        years = [r.year for r in rows]
        cites = [r.citation_count for r in rows]
        pct = percentile_within_group(cites, years)
        for r, v in zip(rows, pct):
            r.citation_percentile_in_year = float(v)
        with_d = [r for r in rows if r.d is not None]
        if with_d:
            pct_d = percentile_within_group(
                [r.d for r in with_d], [r.year for r in with_d]
            )
            for r, v in zip(with_d, pct_d):
                r.disruption_percentile_in_year = float(v)
    return rows
