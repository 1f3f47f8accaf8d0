"""Synthetic corpus generator with planted, recoverable structure.

Each focal publication gets a local embedding neighborhood built from a
base point B (fixed norm, random direction) and a unit direction u
orthogonal to B:

* reference cluster centered at B,
* focal embedding at B + delta * u,
* citer cluster centered at B + t * delta * u.

The displacement factor t is the planted regime knob: t near 0 keeps the
citing cluster on the reference cluster (consolidating), t between 0 and
1 leaves it between the two anchor cosines (balanced), and t beyond the
focal pushes the citing cluster past it along the same direction
(exploratory). Because every base point has the same norm and u is
orthogonal to it, the reference-citer cosine is a monotone function of t
across the whole corpus.

Correlated structure planted alongside the geometry:

* citer count decays with t (citations track reference-citer alignment);
* citers co-cite the focal's references with regime-dependent
  probability (disruption ordering);
* "novel" focals draw reference venues across venue clusters instead of
  within one (journal-pair novelty direction);
* team size grows toward the consolidating regime.

Outputs land in the exact ingest formats plus a truth sidecar
(truth.jsonl) with the planted label and knobs per focal id.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import write_embeddings_binary
from .rng import rng_for

REGIMES = ("consolidating", "balanced", "exploratory")

# Balanced requires the citer displacement to exceed half the focal
# displacement (else the reference-citer cosine tops both anchors) while
# staying short of the focal itself; the band keeps a noise margin to
# both boundaries.
DEFAULT_BANDS = {
    "consolidating": (0.0, 0.25),
    "balanced": (0.58, 0.88),
    "exploratory": (1.8, 2.6),
}
TEAM_SIZE_MEANS = {"consolidating": 7.0, "balanced": 3.0, "exploratory": 1.5}
COCITE_PROB = {"consolidating": 0.25, "balanced": 0.055, "exploratory": 0.004}
CROSS_CLUSTER_PROB = {"consolidating": 0.05, "balanced": 0.7, "exploratory": 0.9}

BASE_NORM = 10.0
DISPLACEMENT = 1.0
CITER_BASE = 18.0
CITER_DECAY = 1.3
CITER_FLOOR = 5
N_VENUE_CLUSTERS = 3


@dataclass
class SyntheticSpec:
    """Knobs for one synthetic corpus; fully determined by `seed`."""

    n_publications: int = 200          # focal (analyzable) publications
    n_venues: int = 30
    dimension: int = 64
    regime_mix: dict = field(default_factory=lambda: {
        "consolidating": 0.55, "balanced": 0.28, "exploratory": 0.17,
    })
    noise_scale: float = 0.3           # expected member offset norm
    team_size_scale: float = 1.0       # multiplies the per-regime team-size means
    seed: int = 0
    start_year: int = 1985
    n_years: int = 20
    regime_bands: dict = field(default_factory=dict)  # per-regime (t_lo, t_hi) override

    def validate(self) -> None:
        if self.dimension < 2:
            raise ValueError("dimension must be >= 2")
        if self.n_publications < 1:
            raise ValueError("n_publications must be >= 1")
        if self.n_venues < N_VENUE_CLUSTERS:
            raise ValueError(f"need at least {N_VENUE_CLUSTERS} venues")
        for r in self.regime_mix:
            if r not in REGIMES:
                raise ValueError(f"unknown regime '{r}'")
        total = sum(self.regime_mix.get(r, 0.0) for r in REGIMES)
        if abs(total - 1.0) > 1e-9:
            raise ValueError("regime shares must sum to 1")


@dataclass
class SynthResult:
    corpus_path: Path
    embeddings_path: Path
    truth_path: Path
    n_records: int
    n_focal: int
    truth: list


def _allocate_regimes(mix: dict, n: int) -> list:
    """Largest-remainder allocation so pure mixes are exactly pure."""
    shares = [(r, mix.get(r, 0.0)) for r in REGIMES]
    counts = {r: int(math.floor(s * n)) for r, s in shares}
    remainder = n - sum(counts.values())
    by_frac = sorted(shares, key=lambda rs: -(rs[1] * n - math.floor(rs[1] * n)))
    for r, _ in by_frac[:remainder]:
        counts[r] += 1
    out = []
    for r in REGIMES:
        out.extend([r] * counts[r])
    return out


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def generate_synthetic(spec: SyntheticSpec, out_dir) -> SynthResult:
    """Write corpus.jsonl, embeddings.f32, and truth.jsonl under `out_dir`."""
    spec.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = rng_for(spec.seed, "synth")
    dim = spec.dimension
    member_sigma = spec.noise_scale / math.sqrt(dim)

    venues = [f"V{k:04d}" for k in range(spec.n_venues)]
    clusters = [venues[c::N_VENUE_CLUSTERS] for c in range(N_VENUE_CLUSTERS)]

    regimes = _allocate_regimes(spec.regime_mix, spec.n_publications)
    rng.shuffle(regimes)
    bands = dict(DEFAULT_BANDS)
    bands.update(spec.regime_bands)

    records = []     # dicts in emission order
    embeddings = []  # (id, vector) pairs
    truth = []
    ref_registry = []  # (ref_id, year) for cross-citation noise

    def noise() -> np.ndarray:
        return rng.normal(size=dim) * member_sigma

    # pass 1: references and focal publications
    focal_plan = []
    ref_counter = 0
    for i, regime in enumerate(regimes):
        focal_id = f"W{i:06d}"
        year = spec.start_year + int(rng.integers(0, spec.n_years))
        t_lo, t_hi = bands[regime]
        t = float(rng.uniform(t_lo, t_hi))

        base = _unit(rng.normal(size=dim)) * BASE_NORM
        raw_u = rng.normal(size=dim)
        u = _unit(raw_u - (raw_u @ base) / (BASE_NORM**2) * base)
        focal_vec = base + DISPLACEMENT * u + noise() * 0.3
        citer_center = base + t * DISPLACEMENT * u

        cross_cluster = bool(rng.random() < CROSS_CLUSTER_PROB[regime])
        home_cluster = int(rng.integers(0, N_VENUE_CLUSTERS))
        n_refs = 12 + int(rng.poisson(2.0))
        ref_ids = []
        for _ in range(n_refs):
            ref_id = f"R{ref_counter:07d}"
            ref_counter += 1
            if cross_cluster:
                venue = venues[int(rng.integers(0, len(venues)))]
            else:
                cluster = clusters[home_cluster]
                venue = cluster[int(rng.integers(0, len(cluster)))]
            ref_year = year - int(rng.integers(1, 11))
            records.append({
                "id": ref_id, "year": ref_year, "venue_id": venue,
                "field_tags": ["astronomy"], "team_size": 1 + int(rng.integers(0, 4)),
                "has_funding": bool(rng.random() < 0.4),
                "doc_type": "journal-article", "reference_ids": [],
            })
            embeddings.append((ref_id, base + noise()))
            ref_registry.append((ref_id, ref_year))
            ref_ids.append(ref_id)

        mean_ts = TEAM_SIZE_MEANS[regime] * spec.team_size_scale
        team_size = 1 + int(rng.poisson(max(mean_ts - 1.0, 0.0)))
        records.append({
            "id": focal_id, "year": year, "venue_id": venues[home_cluster],
            "field_tags": ["astronomy"], "team_size": team_size,
            "has_funding": bool(rng.random() < 0.4),
            "doc_type": "journal-article", "reference_ids": ref_ids,
        })
        embeddings.append((focal_id, focal_vec))

        n_citers = CITER_FLOOR + int(round(CITER_BASE * math.exp(-CITER_DECAY * t)))
        n_citers += int(rng.integers(0, 2))
        focal_plan.append((focal_id, year, regime, t, citer_center, ref_ids, n_citers))
        truth.append({
            "id": focal_id, "label": regime, "t": t, "year": year,
            "n_citers": n_citers, "cross_cluster": cross_cluster,
        })

    # pass 2: citing publications (may cross-cite earlier references)
    citer_counter = 0
    for focal_id, year, regime, t, citer_center, ref_ids, n_citers in focal_plan:
        p_within_field = 0.75 - 0.15 * min(t, 2.0)
        for _ in range(n_citers):
            citer_id = f"C{citer_counter:07d}"
            citer_counter += 1
            citer_year = year + int(rng.integers(1, 9))
            refs = [focal_id]
            cocite_mask = rng.random(len(ref_ids)) < COCITE_PROB[regime]
            refs.extend(r for r, hit in zip(ref_ids, cocite_mask) if hit)
            if rng.random() < 0.3 and ref_registry:
                for _ in range(int(rng.integers(1, 3))):
                    rid, ryear = ref_registry[int(rng.integers(0, len(ref_registry)))]
                    if ryear < citer_year and rid not in refs:
                        refs.append(rid)
            tags = ["astronomy"] if rng.random() < p_within_field else ["physics"]
            records.append({
                "id": citer_id, "year": citer_year,
                "venue_id": venues[int(rng.integers(0, len(venues)))],
                "field_tags": tags, "team_size": 1 + int(rng.integers(0, 5)),
                "has_funding": bool(rng.random() < 0.4),
                "doc_type": "journal-article", "reference_ids": refs,
            })
            embeddings.append((citer_id, citer_center + noise()))

    corpus_path = out_dir / "corpus.jsonl"
    with open(corpus_path, "w", encoding="utf-8", newline="") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    embeddings_path = out_dir / "embeddings.f32"
    write_embeddings_binary(embeddings_path, dim, embeddings)

    truth_path = out_dir / "truth.jsonl"
    with open(truth_path, "w", encoding="utf-8", newline="") as fh:
        for row in truth:
            fh.write(json.dumps(row, sort_keys=True) + "\n")

    return SynthResult(
        corpus_path=corpus_path, embeddings_path=embeddings_path,
        truth_path=truth_path, n_records=len(records),
        n_focal=spec.n_publications, truth=truth,
    )
