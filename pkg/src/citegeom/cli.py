"""Command-line entry points.

Subcommands: ingest, geometry, disruption, novelty, analyze, run-all,
synth. Paths can come from CITEGEOM_CORPUS / CITEGEOM_EMBEDDINGS /
CITEGEOM_OUT environment variables. Exit codes: 0 success, 2 validation
error, 3 stage failure.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import __version__
from .analytics import build_indicators, windowed_regression
from .corpus import FilterPolicy, apply_filters, load_corpus
from .disruption import disruption_batch
from .geometry import compute_geometry
from .novelty import novelty_batch
from .pipeline import (
    EXIT_STAGE_FAILURE,
    EXIT_VALIDATION,
    PipelineConfig,
    read_disruption_csv,
    read_geometry_csv,
    read_index,
    read_novelty_csv,
    run_pipeline,
    write_disruption_csv,
    write_geometry_csv,
    write_indicators_csv,
    write_index,
    write_novelty_csv,
)
from .reports import write_csv, write_report_suite
from .synth import SyntheticSpec, generate_synthetic

_corpus_opt = click.option(
    "--corpus", envvar="CITEGEOM_CORPUS", required=True,
    type=click.Path(exists=True, dir_okay=False), help="corpus.jsonl snapshot")
_embeddings_opt = click.option(
    "--embeddings", envvar="CITEGEOM_EMBEDDINGS", required=True,
    type=click.Path(exists=True, dir_okay=False), help="embedding file (binary or CSV)")
_out_opt = click.option(
    "--out", envvar="CITEGEOM_OUT", required=True,
    type=click.Path(file_okay=False), help="output directory")


@click.group()
@click.version_option(__version__)
def main():
    """Semantic-geometry and structural indicators over a citation corpus."""


@main.command("ingest")
@_corpus_opt
@_embeddings_opt
@click.option("--min-refs", default=10, show_default=True, type=int)
@click.option("--min-cites", default=5, show_default=True, type=int)
@click.option("--doc-types", default="journal-article,conference-paper",
              show_default=True, help="comma-separated allowed doc types")
@click.option("--no-require-embedding", is_flag=True,
              help="keep publications without embeddings eligible")
@_out_opt
def ingest_cmd(corpus, embeddings, min_refs, min_cites, doc_types,
               no_require_embedding, out):
    """Load the corpus, apply eligibility filters, write the index."""
    config = PipelineConfig(
        corpus=corpus, embeddings=embeddings, out=out,
        min_refs=min_refs, min_cites=min_cites,
        allowed_doc_types=tuple(t.strip() for t in doc_types.split(",") if t.strip()),
        require_embedding=not no_require_embedding,
    )
    loaded = load_corpus(corpus, embeddings)
    eligible, filter_report = apply_filters(loaded, config.policy())
    write_index(out, config, loaded, eligible, filter_report)
    click.echo(f"loaded {loaded.report.n_records} records, "
               f"{loaded.report.n_edges} edges; {len(eligible)} eligible")
    click.echo(f"index written to {out}")


@main.command("geometry")
@click.option("--index", "index_dir", required=True,
              type=click.Path(exists=True, file_okay=False), help="ingest index dir")
@_out_opt
@click.option("--citation-window", default=None, type=int,
              help="restrict citers to this many years after the focal")
@click.option("--unit-normalize", is_flag=True,
              help="average unit-normalized member vectors (non-default)")
@click.option("--workers", default=1, show_default=True, type=int)
def geometry_cmd(index_dir, out, citation_window, unit_normalize, workers):
    """Compute per-publication triangle measurements and labels."""
    loaded, eligible = read_index(index_dir)
    rows, skips, ties = compute_geometry(
        eligible, loaded.graph, loaded.store, loaded.records,
        citation_window=citation_window, unit_normalize=unit_normalize,
        workers=workers,
    )
    out = Path(out)
    write_geometry_csv(rows, out / "geometry.csv")
    write_csv(out / "geometry_skips.csv", ["id", "reason"], skips)
    click.echo(f"{len(rows)} records, {len(skips)} skipped, "
               f"{ties} similarity ties -> {out / 'geometry.csv'}")


@main.command("disruption")
@click.option("--index", "index_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@_out_opt
@click.option("--workers", default=1, show_default=True, type=int)
def disruption_cmd(index_dir, out, workers):
    """Compute the disruption index over the raw graph."""
    loaded, eligible = read_index(index_dir)
    years = {pid: rec.year for pid, rec in loaded.records.items()}
    rows = disruption_batch(eligible, loaded.graph, years, workers=workers)
    out = Path(out)
    write_disruption_csv(rows, out / "disruption.csv")
    defined = sum(1 for r in rows if r.defined)
    click.echo(f"{defined}/{len(rows)} defined -> {out / 'disruption.csv'}")


@main.command("novelty")
@click.option("--index", "index_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@_out_opt
@click.option("--rounds", default=30, show_default=True, type=int)
@click.option("--seed", required=True, type=int, help="root seed (u64)")
@click.option("--workers", default=1, show_default=True, type=int)
def novelty_cmd(index_dir, out, rounds, seed, workers):
    """Journal-pair novelty scores against the reshuffled null model."""
    loaded, eligible = read_index(index_dir)
    rows, skips = novelty_batch(loaded.records, eligible, rounds=rounds,
                                seed=seed, workers=workers)
    out = Path(out)
    write_novelty_csv(rows, out / "novelty.csv")
    write_csv(out / "novelty_skips.csv", ["id", "reason"], skips)
    click.echo(f"{len(rows)} records, {len(skips)} skipped -> {out / 'novelty.csv'}")


@main.command("analyze")
@click.option("--index", "index_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--artifacts", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="directory holding geometry.csv / disruption.csv / novelty.csv")
@_out_opt
@click.option("--tau", default=0.5, show_default=True, type=float)
@click.option("--field-tag", default="astronomy", show_default=True)
@click.option("--citation-windows", default="5,10,20,40", show_default=True)
@click.option("--reports", default="all", show_default=True,
              help="comma-separated report names, or 'all'")
@click.option("--log-controls", is_flag=True,
              help="enter reference count and team size in logs")
@click.option("--no-figures", is_flag=True, help="write CSVs only")
def analyze_cmd(index_dir, artifacts, out, tau, field_tag, citation_windows,
                reports, log_controls, no_figures):
    """Join stage outputs and emit the report tables (and figures)."""
    loaded, _ = read_index(index_dir)
    artifacts = Path(artifacts)
    geo_rows = read_geometry_csv(artifacts / "geometry.csv")
    dis_rows = read_disruption_csv(artifacts / "disruption.csv")
    novelty_path = artifacts / "novelty.csv"
    nov_rows = read_novelty_csv(novelty_path) if novelty_path.exists() else []
    windows = tuple(int(w) for w in citation_windows.split(",") if w.strip())
    indicators = build_indicators(loaded, geo_rows, dis_rows, nov_rows,
                                  citation_windows=windows, field_tag=field_tag)
    out = Path(out)
    write_indicators_csv(indicators, out / "indicators.csv", windows)
    fits, skipped = windowed_regression(indicators, window_len=5, tau=tau,
                                        log_controls=log_controls)
    selection = tuple(r.strip() for r in reports.split(",") if r.strip())
    try:
        names = write_report_suite(indicators, fits, skipped, out / "report",
                                   figures=not no_figures,
                                   citation_windows=windows,
                                   selection=selection)
    except ValueError as exc:
        click.echo(f"invalid --reports: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    click.echo(f"{len(indicators)} indicator rows; report files: {', '.join(names)}")


@main.command("run-all")
@click.option("--config", "config_path", default=None,
              type=click.Path(exists=True, dir_okay=False), help="YAML config")
@click.option("--corpus", envvar="CITEGEOM_CORPUS", default=None,
              type=click.Path(dir_okay=False))
@click.option("--embeddings", envvar="CITEGEOM_EMBEDDINGS", default=None,
              type=click.Path(dir_okay=False))
@click.option("--out", envvar="CITEGEOM_OUT", default=None,
              type=click.Path(file_okay=False))
@click.option("--seed", default=None, type=int)
@click.option("--workers", default=None, type=int)
@click.option("--rounds", "novelty_rounds", default=None, type=int)
@click.option("--tau", default=None, type=float)
@click.option("--min-refs", default=None, type=int)
@click.option("--min-cites", default=None, type=int)
@click.option("--citation-window", default=None, type=int)
@click.option("--field-tag", default=None)
@click.option("--no-figures", is_flag=True)
def run_all_cmd(config_path, no_figures, **overrides):
    """Run ingest through analyze into one artifact directory."""
    try:
        config = (PipelineConfig.from_yaml(config_path)
                  if config_path else PipelineConfig())
    except Exception as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    if no_figures:
        config.figures = False

    result = run_pipeline(config)
    if result.exit_code == EXIT_VALIDATION:
        click.echo(f"validation error: {result.error}", err=True)
        sys.exit(EXIT_VALIDATION)
    if result.exit_code == EXIT_STAGE_FAILURE:
        click.echo(f"stage '{result.failed_stage}' failed: {result.error}", err=True)
        sys.exit(EXIT_STAGE_FAILURE)
    for stage, counts in result.stage_rows.items():
        click.echo(f"{stage}: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
    click.echo(f"manifest: {result.manifest_path}")


@main.command("synth")
@_out_opt
@click.option("--n", "n_publications", default=200, show_default=True, type=int,
              help="number of focal (analyzable) publications")
@click.option("--venues", default=30, show_default=True, type=int)
@click.option("--dim", default=64, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--noise", default=0.3, show_default=True, type=float)
@click.option("--start-year", default=1985, show_default=True, type=int)
@click.option("--years", default=20, show_default=True, type=int)
@click.option("--mix", default="consolidating=0.55,balanced=0.28,exploratory=0.17",
              show_default=True, help="regime shares, must sum to 1")
def synth_cmd(out, n_publications, venues, dim, seed, noise, start_year,
              years, mix):
    """Generate a synthetic corpus with planted structure."""
    regime_mix = {}
    try:
        for part in mix.split(","):
            name, share = part.split("=")
            regime_mix[name.strip()] = float(share)
        spec = SyntheticSpec(
            n_publications=n_publications, n_venues=venues, dimension=dim,
            regime_mix=regime_mix, noise_scale=noise, seed=seed,
            start_year=start_year, n_years=years,
        )
        spec.validate()
    except ValueError as exc:
        click.echo(f"invalid synthetic spec: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    result = generate_synthetic(spec, out)
    click.echo(f"{result.n_records} records ({result.n_focal} focal) -> {out}")


if __name__ == "__main__":
    main()
