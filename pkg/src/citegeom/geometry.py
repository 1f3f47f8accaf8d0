"""Embedding-space triangle per publication: distances, area, cosines, label.

For a focal publication the three vertices are its own embedding, the
mean embedding of its references, and the mean embedding of its citers.
Labels rank the reference-citer cosine s_rc against the other two:

* exploratory     s_rc < min(s_rp, s_pc)
* consolidating   s_rc > max(s_rp, s_pc)
* balanced        otherwise (ties included)

Members of either side lacking an embedding are dropped from the
centroid; the publication is skipped (with a reason code) only when a
side has no embeddable member at all.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .corpus import CitationGraph, EmbeddingStore

LABELS = ("exploratory", "balanced", "consolidating")

# Skip reason codes emitted by the batch driver.
SKIP_FOCAL_MISSING = "focal_missing_embedding"
SKIP_NO_REFS = "no_embeddable_references"
SKIP_NO_CITES = "no_embeddable_citers"
SKIP_DEGENERATE = "degenerate_centroid"
SKIP_ERROR = "geometry_error"

HERON_CLAMP = 1e-9  # radicand clamp window, relative to m**4


@dataclass
class Centroids:
    """The three triangle vertices plus member counts per side."""

    focal: np.ndarray
    refs: np.ndarray
    citers: np.ndarray
    n_refs_used: int
    n_cites_used: int


@dataclass
class GeometryRecord:
    id: str
    year: int
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


def centroid(vectors) -> np.ndarray:
    """Component-wise arithmetic mean of a nonempty list of vectors."""
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.shape[0] == 0:
        raise ValueError("no embeddable members: cannot take centroid of empty set")
    if not np.isfinite(arr).all():
        raise ValueError("non-finite vector in centroid input")
    return arr.mean(axis=0)


def rpc_distances(cent: Centroids) -> tuple:
    """Euclidean distances (d_rp, d_pc, d_rc) between the three vertices."""
    d_rp = float(np.linalg.norm(cent.refs - cent.focal))
    d_pc = float(np.linalg.norm(cent.focal - cent.citers))
    d_rc = float(np.linalg.norm(cent.refs - cent.citers))
    return d_rp, d_pc, d_rc


def triangle_area(d_rp: float, d_pc: float, d_rc: float) -> float:
    """Heron area from the three side lengths.

    A slightly negative radicand (within -HERON_CLAMP * m**4) is treated
    as collinear and clamped to zero; anything more negative means the
    inputs are not distances of a real point triple.
    """
    if min(d_rp, d_pc, d_rc) < 0:
        raise ValueError("negative distance")
    m = 0.5 * (d_rp + d_pc + d_rc)
    radicand = m * (m - d_rp) * (m - d_pc) * (m - d_rc)
    if radicand < 0.0:
        if radicand >= -HERON_CLAMP * m**4:
            radicand = 0.0
        else:
            raise ValueError(
                f"inconsistent distances ({d_rp}, {d_pc}, {d_rc}): "
                "triangle inequality violated beyond tolerance"
            )
    return math.sqrt(radicand)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("degenerate centroid direction (zero norm)")
    return float(np.dot(a, b) / (na * nb))


def rpc_similarities(cent: Centroids) -> tuple:
    """Cosines (s_rp, s_pc, s_rc) of the raw centroid vectors from the origin."""
    s_rp = _cosine(cent.refs, cent.focal)
    s_pc = _cosine(cent.focal, cent.citers)
    s_rc = _cosine(cent.refs, cent.citers)
    return s_rp, s_pc, s_rc


def classify(s_rp: float, s_pc: float, s_rc: float) -> str:
    """Three-way label from the rank of s_rc among the pairwise cosines."""
    if any(math.isnan(v) for v in (s_rp, s_pc, s_rc)):
        raise ValueError("NaN similarity")
    lo, hi = min(s_rp, s_pc), max(s_rp, s_pc)
    if s_rc < lo:
        return "exploratory"
    if s_rc > hi:
        return "consolidating"
    return "balanced"


def build_centroids(
    pub_id: str,
    graph: CitationGraph,
    store: EmbeddingStore,
    years: Optional[dict] = None,
    citation_window: Optional[int] = None,
    unit_normalize: bool = False,
):
    """Centroids for one publication, or a skip reason string.

    `citation_window` restricts the citing set to citers published within
    that many years of the focal (requires `years`). With
    `unit_normalize`, members are scaled to unit norm before averaging
    (non-default; the default averages raw vectors).
    """
    focal_vec = store.get(pub_id)
    if focal_vec is None:
        return SKIP_FOCAL_MISSING

    ref_ids = [r for r in graph.references(pub_id) if r in store]
    if not ref_ids:
        return SKIP_NO_REFS

    citer_ids = graph.citers(pub_id)
    if citation_window is not None:
        focal_year = years[pub_id]
        citer_ids = tuple(
            c for c in citer_ids
            if c in years and years[c] <= focal_year + citation_window
        )
    citer_ids = [c for c in citer_ids if c in store]
    if not citer_ids:
        return SKIP_NO_CITES

    ref_rows = store.rows(ref_ids)
    citer_rows = store.rows(citer_ids)
    if unit_normalize:
        ref_rows = ref_rows / np.linalg.norm(ref_rows, axis=1, keepdims=True)
        citer_rows = citer_rows / np.linalg.norm(citer_rows, axis=1, keepdims=True)
        norm = float(np.linalg.norm(focal_vec))
        focal_vec = focal_vec / norm if norm > 0 else focal_vec
    return Centroids(
        focal=focal_vec,
        refs=ref_rows.mean(axis=0),
        citers=citer_rows.mean(axis=0),
        n_refs_used=len(ref_ids),
        n_cites_used=len(citer_ids),
    )


def _geometry_one(pub_id, year, graph, store, years, citation_window, unit_normalize):
    cent = build_centroids(pub_id, graph, store, years, citation_window, unit_normalize)
    if isinstance(cent, str):
        return pub_id, None, cent, False
    d_rp, d_pc, d_rc = rpc_distances(cent)
    try:
        s_rp, s_pc, s_rc = rpc_similarities(cent)
    except ValueError:
        return pub_id, None, SKIP_DEGENERATE, False
    try:
        area = triangle_area(d_rp, d_pc, d_rc)
        label = classify(s_rp, s_pc, s_rc)
    except ValueError as exc:  # per-record failures become skip rows
        return pub_id, None, f"{SKIP_ERROR}:{exc}", False
    tie = s_rc == min(s_rp, s_pc) or s_rc == max(s_rp, s_pc)
    rec = GeometryRecord(
        id=pub_id, year=year,
        s_rp=s_rp, s_pc=s_pc, s_rc=s_rc,
        d_rp=d_rp, d_pc=d_pc, d_rc=d_rc,
        area=area, label=label,
        n_refs_used=cent.n_refs_used, n_cites_used=cent.n_cites_used,
    )
    return pub_id, rec, None, tie


def compute_geometry(
    eligible_ids,
    graph: CitationGraph,
    store: EmbeddingStore,
    records: dict,
    citation_window: Optional[int] = None,
    unit_normalize: bool = False,
    workers: int = 1,
) -> tuple:
    """Batch geometry over eligible publications.

    Returns (records sorted by id, skips sorted by id, tie count).
    Per-record failures become skip rows; the batch never aborts. Results
    are gathered and sorted by id, so they do not depend on `workers`.
    """
    ids = sorted(eligible_ids)
    years = {pid: rec.year for pid, rec in records.items()}

    def work(pub_id):
        return _geometry_one(
            pub_id, years[pub_id], graph, store, years, citation_window, unit_normalize
        )

    if workers > 1 and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, ids))
    else:
        results = [work(pid) for pid in ids]

    out = []
    skips = []
    ties = 0
    for pub_id, rec, reason, tie in results:
        if rec is None:
            skips.append((pub_id, reason))
        else:
            out.append(rec)
            ties += int(tie)
    out.sort(key=lambda r: r.id)
    skips.sort()
    return out, skips, ties
