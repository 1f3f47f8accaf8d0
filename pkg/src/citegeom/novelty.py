"""Journal-pair novelty against a reference-shuffling null model.

Within each citing-year stratum, every publication contributes all
unordered venue pairs over its (venue-resolvable) references. The null
model reshuffles references among publications of the stratum by
repeatedly swapping two references, drawn from different citing
publications, whose cited publications share the same publication year.
This preserves each publication's reference count and cited-year multiset
exactly. Pair means and standard deviations over the rounds give a
z-score per pair; a publication's score is the 10th percentile (linear
interpolation) of its pair z-scores, and negative scores mark high
novelty.

One round performs E swap attempts (E = stratum edge count), each round
restarting from the observed assignment. Swaps that would duplicate a
reference within a publication, create a self-citation, or pair two
references of the same publication are rejected. Standard deviations are
population-style (divide by the round count).
"""

from __future__ import annotations

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from math import sqrt
from typing import Optional

import numpy as np

from .rng import rng_for

REASON_NO_PAIRS = "no_venue_pairs"
REASON_NO_DEFINED_Z = "no_defined_z"


@dataclass
class NullPairStats:
    """Per-pair mean/std of frequencies across shuffle rounds."""

    rounds: int
    mean: dict
    std: dict
    n_edges: int = 0
    n_frozen_edges: int = 0  # edges in swap classes of size < 2


@dataclass
class NoveltyRecord:
    id: str
    n_value: float
    n_pairs: int
    high_novelty: bool


def _pair_key(v1: str, v2: str) -> tuple:
    return (v1, v2) if v1 <= v2 else (v2, v1)


def _venue_list(ref_ids, venue_of: dict) -> list:
    return [venue_of[r] for r in ref_ids if r in venue_of]


def _pairs_of(venues) -> Counter:
    table: Counter = Counter()
    for v1, v2 in combinations(venues, 2):
        table[_pair_key(v1, v2)] += 1
    return table


def build_pair_frequencies(records: dict, year: int) -> Counter:
    """Observed venue-pair counts over all publications of `year`.

    Pairs are combinations over distinct references, so two references in
    the same venue contribute a same-venue pair. References without a
    loaded record or without a venue id are dropped from pairing.
    """
    venue_of = {pid: r.venue_id for pid, r in records.items() if r.venue_id}
    table: Counter = Counter()
    for pid, rec in records.items():
        if rec.year != year:
            continue
        table.update(_pairs_of(_venue_list(rec.reference_ids, venue_of)))
    return table


@dataclass
class _Stratum:
    """Mutable swap state for one citing-year stratum."""

    pub_ids: list
    edge_pub: list            # owning publication index per edge (static)
    edge_cited: list          # cited id per edge (mutated by swaps)
    pub_edges: list           # edge indices per publication (static)
    classes: list             # edge indices grouped by cited-publication year
    class_of: list            # (class index, position in class) per edge
    refsets: list             # full current reference sets incl. dangling
    cited_years: dict
    n_frozen: int = 0


def _build_stratum(records: dict, year: int) -> Optional[_Stratum]:
    cited_years = {pid: r.year for pid, r in records.items()}
    venued = {pid for pid, r in records.items() if r.venue_id}
    pub_ids = [pid for pid, r in records.items() if r.year == year and r.reference_ids]
    if not pub_ids:
        return None
    edge_pub, edge_cited, pub_edges, refsets = [], [], [], []
    for pi, pid in enumerate(pub_ids):
        rec = records[pid]
        refsets.append(set(rec.reference_ids))
        own = []
        for ref in rec.reference_ids:
            # dangling or venue-less references stay fixed: they carry no
            # pair information and moving them would shift per-publication
            # venued reference counts, breaking total pair mass
            if ref in cited_years and ref in venued:
                own.append(len(edge_pub))
                edge_pub.append(pi)
                edge_cited.append(ref)
        pub_edges.append(own)
    if not edge_pub:
        return None

    by_year: dict = {}
    for ei, cited in enumerate(edge_cited):
        by_year.setdefault(cited_years[cited], []).append(ei)
    classes = []
    class_of = [None] * len(edge_pub)
    n_frozen = 0
    for yr in sorted(by_year):
        members = by_year[yr]
        ci = len(classes)
        classes.append(members)
        for pos, ei in enumerate(members):
            class_of[ei] = (ci, pos)
        # a class admits no swap without two references from distinct citers
        if len({edge_pub[ei] for ei in members}) < 2:
            n_frozen += len(members)
    return _Stratum(
        pub_ids=pub_ids, edge_pub=edge_pub, edge_cited=edge_cited,
        pub_edges=pub_edges, classes=classes, class_of=class_of,
        refsets=refsets, cited_years=cited_years, n_frozen=n_frozen,
    )


def _run_round(stratum: _Stratum, rng: np.random.Generator, venue_of: dict,
               check_conservation: bool, swap_factor: float = 1.0) -> Counter:
    """One shuffle round from the observed assignment; returns its pair table."""
    cited = list(stratum.edge_cited)
    refsets = [set(s) for s in stratum.refsets]
    n_edges = len(cited)
    attempts = max(1, int(round(swap_factor * n_edges)))
    e1_draws = rng.integers(0, n_edges, size=attempts)
    pick_draws = rng.random(size=attempts)

    for i1, pick in zip(e1_draws, pick_draws):
        ci, pos1 = stratum.class_of[i1]
        cls = stratum.classes[ci]
        k = len(cls)
        if k < 2:
            continue
        r = int(pick * (k - 1))
        if r >= pos1:
            r += 1
        i2 = cls[r]
        p1, p2 = stratum.edge_pub[i1], stratum.edge_pub[i2]
        if p1 == p2:
            continue
        c1, c2 = cited[i1], cited[i2]
        if c2 in refsets[p1] or c1 in refsets[p2]:
            continue
        if c2 == stratum.pub_ids[p1] or c1 == stratum.pub_ids[p2]:
            continue
        refsets[p1].discard(c1)
        refsets[p1].add(c2)
        refsets[p2].discard(c2)
        refsets[p2].add(c1)
        cited[i1], cited[i2] = c2, c1

    if check_conservation:
        _assert_conserved(stratum, cited)

    table: Counter = Counter()
    for own in stratum.pub_edges:
        venues = [venue_of[cited[ei]] for ei in own if cited[ei] in venue_of]
        table.update(_pairs_of(venues))
    return table


def _assert_conserved(stratum: _Stratum, cited: list) -> None:
    for pi, own in enumerate(stratum.pub_edges):
        before = Counter(stratum.cited_years[stratum.edge_cited[ei]] for ei in own)
        after = Counter(stratum.cited_years[cited[ei]] for ei in own)
        if before != after:
            raise RuntimeError(
                f"shuffle broke cited-year conservation for '{stratum.pub_ids[pi]}'"
            )
        if len(own) != len({cited[ei] for ei in own}):
            raise RuntimeError(
                f"shuffle duplicated a reference in '{stratum.pub_ids[pi]}'"
            )


def shuffle_null(
    records: dict,
    year: int,
    rounds: int,
    seed: int,
    workers: int = 1,
    check_conservation: bool = False,
    swap_factor: float = 1.0,
) -> NullPairStats:
    """Pair-frequency mean/std across `rounds` independent reshuffles.

    Deterministic in (seed, rounds, swap_factor): each round draws from a
    sub-seed named by (seed, "novelty", year, round), and per-pair
    accumulation is integer-valued, so results are independent of
    `workers`. One round performs `swap_factor * E` swap attempts, E the
    stratum edge count.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    venue_of = {pid: r.venue_id for pid, r in records.items() if r.venue_id}
    stratum = _build_stratum(records, year)
    if stratum is None:
        return NullPairStats(rounds=rounds, mean={}, std={})

    def run(round_idx: int) -> Counter:
        rng = rng_for(seed, "novelty", year, round_idx)
        return _run_round(stratum, rng, venue_of, check_conservation, swap_factor)

    if workers > 1 and rounds > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            tables = list(pool.map(run, range(rounds)))
    else:
        tables = [run(i) for i in range(rounds)]

    sums: Counter = Counter()
    sumsq: Counter = Counter()
    for table in tables:
        for key, count in table.items():
            sums[key] += count
            sumsq[key] += count * count

    mean = {}
    std = {}
    for key in sums:
        mu = sums[key] / rounds
        var = sumsq[key] / rounds - mu * mu
        mean[key] = mu
        std[key] = sqrt(var) if var > 0 else 0.0
    return NullPairStats(
        rounds=rounds, mean=mean, std=std,
        n_edges=len(stratum.edge_pub), n_frozen_edges=stratum.n_frozen,
    )


def pair_z(f: float, mu: float, sigma: float):
    """z = (f - mu) / sigma; z = 0 when sigma = 0 and f = mu, else None.

    None marks an undefined pair (no variation under the null but a
    deviating observation); undefined pairs are excluded from the
    percentile and from n_pairs.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0:
        return 0.0 if f == mu else None
    return (f - mu) / sigma


def novelty_score(zs) -> float:
    """10th percentile of the z-scores, linear interpolation between ranks."""
    zs = list(zs)
    if not zs:
        raise ValueError("no defined z-scores")
    return float(np.percentile(np.asarray(zs, dtype=np.float64), 10.0))


def publication_z_scores(record, venue_of: dict, observed: Counter,
                         stats: NullPairStats) -> tuple:
    """Defined z-scores for one publication's reference venue pairs."""
    venues = _venue_list(record.reference_ids, venue_of)
    zs = []
    n_undefined = 0
    for v1, v2 in combinations(venues, 2):
        key = _pair_key(v1, v2)
        z = pair_z(observed.get(key, 0), stats.mean.get(key, 0.0), stats.std.get(key, 0.0))
        if z is None:
            n_undefined += 1
        else:
            zs.append(z)
    return zs, n_undefined


def novelty_batch(
    records: dict,
    eligible_ids,
    rounds: int = 30,
    seed: int = 0,
    workers: int = 1,
    check_conservation: bool = False,
    swap_factor: float = 1.0,
) -> tuple:
    """NoveltyRecords for eligible publications, grouped by citing year.

    Pair tables and null statistics are computed over every loaded
    publication of the year (rarity is a corpus-level property); records
    are emitted only for the requested ids. Returns (records sorted by
    id, skip rows (id, reason)).
    """
    venue_of = {pid: r.venue_id for pid, r in records.items() if r.venue_id}
    by_year: dict = {}
    for pid in eligible_ids:
        by_year.setdefault(records[pid].year, []).append(pid)

    out = []
    skips = []
    for year in sorted(by_year):
        observed = build_pair_frequencies(records, year)
        stats = shuffle_null(records, year, rounds, seed, workers,
                             check_conservation, swap_factor)
        for pid in sorted(by_year[year]):
            zs, _ = publication_z_scores(records[pid], venue_of, observed, stats)
            if not zs:
                venues = _venue_list(records[pid].reference_ids, venue_of)
                reason = REASON_NO_PAIRS if len(venues) < 2 else REASON_NO_DEFINED_Z
                skips.append((pid, reason))
                continue
            value = novelty_score(zs)
            out.append(NoveltyRecord(
                id=pid, n_value=value, n_pairs=len(zs), high_novelty=value < 0.0,
            ))
    out.sort(key=lambda r: r.id)
    skips.sort()
    return out, skips
