"""citegeom: semantic geometry and structural indicators for citation corpora.

Given a bibliographic snapshot (one JSON record per publication) and a
dense document-embedding file, this package computes, per publication:

* the triangle spanned in embedding space by the reference centroid, the
  focal embedding, and the citing-publication centroid (pairwise
  distances, Heron area, pairwise cosines, and a three-way label:
  exploratory / balanced / consolidating);
* the disruption index from raw citation structure;
* a journal-pair novelty score against a Monte Carlo reshuffled null;
* downstream tabular analyses (percentiles, decile curves, team-size and
  trend aggregations, Spearman matrix, windowed quantile regressions).

The `citegeom` CLI orchestrates the full pipeline and ships a synthetic
corpus generator with planted structure for validation.
"""

__version__ = "0.1.0"

from .corpus import (
    CitationGraph,
    CorpusFormatError,
    EmbeddingStore,
    FilterPolicy,
    LoadedCorpus,
    Publication,
    apply_filters,
    load_corpus,
)
from .geometry import GeometryRecord, classify, compute_geometry, triangle_area
from .disruption import DisruptionCounts, disruption_batch, disruption_index
from .novelty import NoveltyRecord, novelty_batch, novelty_score, pair_z
from .analytics import RegressionFit, quantile_regression, spearman_matrix
from .synth import SyntheticSpec, generate_synthetic
from .pipeline import PipelineConfig, run_pipeline

__all__ = [
    "CitationGraph",
    "CorpusFormatError",
    "DisruptionCounts",
    "EmbeddingStore",
    "FilterPolicy",
    "GeometryRecord",
    "LoadedCorpus",
    "NoveltyRecord",
    "PipelineConfig",
    "Publication",
    "RegressionFit",
    "SyntheticSpec",
    "apply_filters",
    "classify",
    "compute_geometry",
    "disruption_batch",
    "disruption_index",
    "generate_synthetic",
    "load_corpus",
    "novelty_batch",
    "novelty_score",
    "pair_z",
    "quantile_regression",
    "run_pipeline",
    "spearman_matrix",
    "triangle_area",
    "__version__",
]
