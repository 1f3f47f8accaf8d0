"""Disruption index from raw citation structure.

For a focal publication p with references R(p):

* n_i: citers of p citing none of R(p)
* n_j: citers of p citing at least one member of R(p)
* n_k: publications published strictly after p that cite at least one
  member of R(p) but not p itself

d = (n_i - n_j) / (n_i + n_j + n_k), undefined when the denominator is 0.

All counts use the raw graph. Citers of p count in n_i/n_j regardless of
their year (citing p is itself evidence of posteriority); the strictly-
later-year rule applies only to n_k.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

from .corpus import CitationGraph

REASON_NO_REFS = "no_references"
REASON_ZERO_DENOMINATOR = "zero_denominator"


@dataclass
class DisruptionCounts:
    id: str
    n_i: int
    n_j: int
    n_k: int
    d: Optional[float]
    defined: bool
    reason: Optional[str] = None


def disruption_index(
    focal_id: str,
    graph: CitationGraph,
    years: dict,
    within_ids=None,
) -> DisruptionCounts:
    """Counts and index for one focal publication.

    `within_ids`, when given, restricts the citing-side population (both
    citers of p and reference-citers) to that id set; the default uses
    every loaded citer.
    """
    refs = set(graph.references(focal_id))
    if not refs:
        return DisruptionCounts(focal_id, 0, 0, 0, None, False, REASON_NO_REFS)

    citers = graph.citers(focal_id)
    if within_ids is not None:
        citers = [c for c in citers if c in within_ids]
    citer_set = set(citers)

    n_j = 0
    for c in citer_set:
        if any(r in refs for r in graph.references(c)):
            n_j += 1
    n_i = len(citer_set) - n_j

    focal_year = years.get(focal_id)
    ref_citers = set()
    for r in refs:
        ref_citers.update(graph.citers(r))
    ref_citers.discard(focal_id)
    ref_citers -= citer_set
    n_k = 0
    for q in ref_citers:
        if within_ids is not None and q not in within_ids:
            continue
        q_year = years.get(q)
        if q_year is not None and focal_year is not None and q_year > focal_year:
            n_k += 1

    denom = n_i + n_j + n_k
    if denom == 0:
        return DisruptionCounts(focal_id, 0, 0, 0, None, False, REASON_ZERO_DENOMINATOR)
    return DisruptionCounts(focal_id, n_i, n_j, n_k, (n_i - n_j) / denom, True)


def disruption_batch(
    eligible_ids,
    graph: CitationGraph,
    years: dict,
    within_ids=None,
    workers: int = 1,
) -> list:
    """One DisruptionCounts per id, sorted by id; undefined rows kept.

    Never aborts: publications without references or without any citing
    context come back with defined=False and a reason code.
    """
    ids = sorted(eligible_ids)

    def work(pid):
        return disruption_index(pid, graph, years, within_ids)

    if workers > 1 and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(work, ids))
    else:
        rows = [work(pid) for pid in ids]
    rows.sort(key=lambda r: r.id)
    return rows
