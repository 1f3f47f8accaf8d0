"""Pipeline orchestration: config, stage flow, artifacts, manifest.

Stage order: ingest -> geometry -> disruption -> novelty -> analyze.
Each stage writes its artifact before the next starts; a stage failure
halts downstream stages, keeps partial outputs, and leaves a FAILED
marker naming the stage. A successful run ends with manifest.json
recording the resolved config, its hash, the root seed, per-stage row
counts, and size + sha256 of every emitted file. Reruns with an
identical config produce byte-identical artifacts.

Exit codes: 0 success, 2 config validation error, 3 stage failure.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from . import __version__
from .analytics import build_indicators, windowed_regression
from .corpus import FilterPolicy, LoadedCorpus, apply_filters, load_corpus
from .disruption import DisruptionCounts, disruption_batch
from .geometry import GeometryRecord, compute_geometry
from .novelty import NoveltyRecord, novelty_batch
from .reports import write_csv, write_report_suite

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_STAGE_FAILURE = 3

GEOMETRY_HEADER = ["id", "year", "s_rp", "s_pc", "s_rc", "d_rp", "d_pc", "d_rc",
                   "area", "label", "n_refs_used", "n_cites_used"]
DISRUPTION_HEADER = ["id", "n_i", "n_j", "n_k", "d", "defined"]
NOVELTY_HEADER = ["id", "n_value", "n_pairs", "high_novelty"]


class ConfigError(ValueError):
    """Configuration failed validation before any work started."""


@dataclass
class PipelineConfig:
    """Resolved run configuration; one YAML document or CLI flags."""

    corpus: str = ""
    embeddings: str = ""
    out: str = ""
    min_refs: int = 10
    min_cites: int = 5
    allowed_doc_types: tuple = ("journal-article", "conference-paper")
    require_embedding: bool = True
    citation_count_field_tag: str = ""        # restrict filter citation counts
    citation_window: Optional[int] = None     # geometry citing-set horizon
    citation_windows: tuple = (5, 10, 20, 40)  # observation windows for reports
    novelty_rounds: int = 30
    seed: Optional[int] = None
    tau: float = 0.5
    workers: int = 1
    figures: bool = True
    reports: tuple = ("all",)
    field_tag: str = "astronomy"
    unit_normalize: bool = False
    log_controls: bool = False
    topshare_step: float = 0.1

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls(**data)
        cfg.allowed_doc_types = tuple(cfg.allowed_doc_types)
        cfg.citation_windows = tuple(int(w) for w in cfg.citation_windows)
        cfg.reports = tuple(cfg.reports)
        return cfg

    @classmethod
    def from_yaml(cls, path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError("config file must be a key-value document")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "corpus": str(self.corpus),
            "embeddings": str(self.embeddings),
            "out": str(self.out),
            "min_refs": self.min_refs,
            "min_cites": self.min_cites,
            "allowed_doc_types": list(self.allowed_doc_types),
            "require_embedding": self.require_embedding,
            "citation_count_field_tag": self.citation_count_field_tag,
            "citation_window": self.citation_window,
            "citation_windows": list(self.citation_windows),
            "novelty_rounds": self.novelty_rounds,
            "seed": self.seed,
            "tau": self.tau,
            "workers": self.workers,
            "figures": self.figures,
            "reports": list(self.reports),
            "field_tag": self.field_tag,
            "unit_normalize": self.unit_normalize,
            "log_controls": self.log_controls,
            "topshare_step": self.topshare_step,
        }

    def validate(self) -> list:
        problems = []
        if not self.corpus:
            problems.append("corpus path not set")
        elif not Path(self.corpus).is_file():
            problems.append(f"corpus file not found: {self.corpus}")
        if not self.embeddings:
            problems.append("embeddings path not set")
        elif not Path(self.embeddings).is_file():
            problems.append(f"embeddings file not found: {self.embeddings}")
        if not self.out:
            problems.append("output directory not set")
        if self.min_refs < 0 or self.min_cites < 0:
            problems.append("filter thresholds must be non-negative")
        if self.novelty_rounds < 0:
            problems.append("novelty_rounds must be >= 0")
        if self.novelty_rounds >= 1 and self.seed is None:
            problems.append("seed is required when the novelty stage is enabled")
        if not 0.0 < self.tau < 1.0:
            problems.append("tau must be in (0, 1)")
        if self.workers < 1:
            problems.append("workers must be >= 1")
        if self.citation_window is not None and self.citation_window < 0:
            problems.append("citation_window must be >= 0")
        from .reports import REPORT_NAMES
        unknown = set(self.reports) - set(REPORT_NAMES) - {"all"}
        if unknown:
            problems.append(f"unknown report names: {', '.join(sorted(unknown))}")
        return problems

    def policy(self) -> FilterPolicy:
        return FilterPolicy(
            min_references=self.min_refs,
            min_citations=self.min_cites,
            allowed_doc_types=frozenset(self.allowed_doc_types),
            require_embedding=self.require_embedding,
            citation_field_tag=self.citation_count_field_tag,
        )


def config_hash(config: PipelineConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# stage artifact I/O
# ---------------------------------------------------------------------------

def write_index(index_dir, config: PipelineConfig, loaded: LoadedCorpus,
                eligible, filter_report) -> None:
    index_dir = Path(index_dir)
    index_dir.mkdir(parents=True, exist_ok=True)
    with open(index_dir / "index.json", "w", encoding="utf-8", newline="") as fh:
        json.dump({
            "corpus": str(Path(config.corpus).resolve()),
            "embeddings": str(Path(config.embeddings).resolve()),
            "policy": {
                "min_references": config.min_refs,
                "min_citations": config.min_cites,
                "allowed_doc_types": sorted(config.allowed_doc_types),
                "require_embedding": config.require_embedding,
                "citation_field_tag": config.citation_count_field_tag,
            },
            "filter_report": filter_report.to_dict(),
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(index_dir / "eligible.txt", "w", encoding="utf-8", newline="") as fh:
        for pid in eligible:
            fh.write(pid + "\n")
    with open(index_dir / "load_report.json", "w", encoding="utf-8", newline="") as fh:
        json.dump(loaded.report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_index(index_dir) -> tuple:
    """Reload (LoadedCorpus, eligible ids) from an ingest index directory."""
    index_dir = Path(index_dir)
    with open(index_dir / "index.json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    loaded = load_corpus(meta["corpus"], meta["embeddings"])
    with open(index_dir / "eligible.txt", "r", encoding="utf-8") as fh:
        eligible = [line.strip() for line in fh if line.strip()]
    return loaded, eligible


def write_geometry_csv(rows, path) -> None:
    write_csv(path, GEOMETRY_HEADER, (
        [r.id, r.year, r.s_rp, r.s_pc, r.s_rc, r.d_rp, r.d_pc, r.d_rc,
         r.area, r.label, r.n_refs_used, r.n_cites_used]
        for r in rows
    ))


def read_geometry_csv(path) -> list:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(GeometryRecord(
                id=rec["id"], year=int(rec["year"]),
                s_rp=float(rec["s_rp"]), s_pc=float(rec["s_pc"]), s_rc=float(rec["s_rc"]),
                d_rp=float(rec["d_rp"]), d_pc=float(rec["d_pc"]), d_rc=float(rec["d_rc"]),
                area=float(rec["area"]), label=rec["label"],
                n_refs_used=int(rec["n_refs_used"]), n_cites_used=int(rec["n_cites_used"]),
            ))
    return rows


def write_disruption_csv(rows, path) -> None:
    write_csv(path, DISRUPTION_HEADER, (
        [r.id, r.n_i, r.n_j, r.n_k, r.d, r.defined] for r in rows
    ))


def read_disruption_csv(path) -> list:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            defined = rec["defined"] == "true"
            rows.append(DisruptionCounts(
                id=rec["id"], n_i=int(rec["n_i"]), n_j=int(rec["n_j"]),
                n_k=int(rec["n_k"]), d=float(rec["d"]) if defined else None,
                defined=defined,
            ))
    return rows


def write_novelty_csv(rows, path) -> None:
    write_csv(path, NOVELTY_HEADER, (
        [r.id, r.n_value, r.n_pairs, r.high_novelty] for r in rows
    ))


def read_novelty_csv(path) -> list:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(NoveltyRecord(
                id=rec["id"], n_value=float(rec["n_value"]),
                n_pairs=int(rec["n_pairs"]), high_novelty=rec["high_novelty"] == "true",
            ))
    return rows


INDICATOR_STATIC = ["id", "year", "team_size", "has_funding", "n_refs",
                    "citation_count", "within_field_citations", "cross_field_citations",
                    "citation_percentile_in_year", "disruption_percentile_in_year",
                    "s_rp", "s_pc", "s_rc", "d_rp", "d_pc", "d_rc", "area", "label",
                    "n_refs_used", "n_cites_used", "n_i", "n_j", "n_k", "d",
                    "n_value", "n_pairs", "high_novelty"]


def write_indicators_csv(rows, path, citation_windows=()) -> None:
    window_cols = [f"cites_w{int(w)}" for w in citation_windows]
    header = INDICATOR_STATIC + window_cols

    def serialize(r):
        out = [getattr(r, name) for name in INDICATOR_STATIC]
        out.extend(r.window_citations.get(int(w)) for w in citation_windows)
        return out

    write_csv(path, header, (serialize(r) for r in rows))


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, config: PipelineConfig, stage_rows: dict) -> Path:
    out_dir = Path(out_dir)
    files = {}
    for path in sorted(out_dir.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            rel = path.relative_to(out_dir).as_posix()
            files[rel] = {"bytes": path.stat().st_size, "sha256": _sha256_file(path)}
    manifest = {
        "tool": "citegeom",
        "version": __version__,
        "config": config.to_dict(),
        "config_sha256": config_hash(config),
        "seed": config.seed,
        "notes": {
            "regression_coefficient_scale": "raw",
            "percentile_convention": "average-rank, 100*rank/(n+1)",
        },
        "stage_rows": stage_rows,
        "files": files,
    }
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8", newline="") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def manifest_hash(out_dir) -> str:
    return _sha256_file(Path(out_dir) / "manifest.json")


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

@dataclass
class PipelineResult:
    exit_code: int
    out_dir: Path
    manifest_path: Optional[Path] = None
    failed_stage: Optional[str] = None
    error: Optional[str] = None
    stage_rows: dict = field(default_factory=dict)


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Run every stage; validation errors return before any work."""
    problems = config.validate()
    if problems:
        return PipelineResult(
            exit_code=EXIT_VALIDATION, out_dir=Path(config.out or "."),
            error="; ".join(problems),
        )

    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failed_marker = out_dir / "FAILED"
    if failed_marker.exists():
        failed_marker.unlink()
    stage_rows = {}
    stage = "ingest"
    try:
        loaded = load_corpus(config.corpus, config.embeddings)
        eligible, filter_report = apply_filters(loaded, config.policy())
        write_index(out_dir / "index", config, loaded, eligible, filter_report)
        stage_rows["ingest"] = {
            "records": loaded.report.n_records,
            "edges": loaded.report.n_edges,
            "eligible": len(eligible),
        }

        stage = "geometry"
        geo_rows, geo_skips, ties = compute_geometry(
            eligible, loaded.graph, loaded.store, loaded.records,
            citation_window=config.citation_window,
            unit_normalize=config.unit_normalize,
            workers=config.workers,
        )
        write_geometry_csv(geo_rows, out_dir / "geometry.csv")
        write_csv(out_dir / "geometry_skips.csv", ["id", "reason"], geo_skips)
        stage_rows["geometry"] = {"records": len(geo_rows), "skips": len(geo_skips),
                                  "similarity_ties": ties}

        stage = "disruption"
        years = {pid: rec.year for pid, rec in loaded.records.items()}
        dis_rows = disruption_batch(eligible, loaded.graph, years,
                                    workers=config.workers)
        write_disruption_csv(dis_rows, out_dir / "disruption.csv")
        stage_rows["disruption"] = {
            "records": len(dis_rows),
            "defined": sum(1 for r in dis_rows if r.defined),
        }

        stage = "novelty"
        if config.novelty_rounds >= 1:
            nov_rows, nov_skips = novelty_batch(
                loaded.records, eligible, rounds=config.novelty_rounds,
                seed=config.seed, workers=config.workers,
            )
            write_novelty_csv(nov_rows, out_dir / "novelty.csv")
            write_csv(out_dir / "novelty_skips.csv", ["id", "reason"], nov_skips)
            stage_rows["novelty"] = {"records": len(nov_rows), "skips": len(nov_skips)}
        else:
            nov_rows = []
            stage_rows["novelty"] = {"records": 0, "skipped": True}

        stage = "analyze"
        indicators = build_indicators(
            loaded, geo_rows, dis_rows, nov_rows,
            citation_windows=config.citation_windows, field_tag=config.field_tag,
        )
        write_indicators_csv(indicators, out_dir / "indicators.csv",
                             config.citation_windows)
        fits, skipped_fits = windowed_regression(
            indicators, window_len=5, tau=config.tau,
            log_controls=config.log_controls,
        )
        write_report_suite(
            indicators, fits, skipped_fits, out_dir / "report",
            figures=config.figures, citation_windows=config.citation_windows,
            topshare_step=config.topshare_step, selection=config.reports,
        )
        stage_rows["analyze"] = {"indicators": len(indicators),
                                 "regression_fits": len(fits)}
    except Exception as exc:  # halt downstream stages, keep partial outputs
        with open(failed_marker, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"{stage}: {exc}\n")
        return PipelineResult(
            exit_code=EXIT_STAGE_FAILURE, out_dir=out_dir,
            failed_stage=stage, error=str(exc), stage_rows=stage_rows,
        )

    manifest_path = write_manifest(out_dir, config, stage_rows)
    return PipelineResult(
        exit_code=EXIT_OK, out_dir=out_dir, manifest_path=manifest_path,
        stage_rows=stage_rows,
    )
