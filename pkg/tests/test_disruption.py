import numpy as np
import pytest

from citegeom.corpus import CitationGraph, FilterPolicy, apply_filters, load_corpus
from citegeom.disruption import (
    REASON_NO_REFS,
    REASON_ZERO_DENOMINATOR,
    disruption_batch,
    disruption_index,
)
from citegeom.geometry import compute_geometry
from citegeom.synth import SyntheticSpec, generate_synthetic

from util import random_citation_records, record


def graph_of(records):
    return CitationGraph({r["id"]: tuple(r["reference_ids"]) for r in records})


def years_of(records):
    return {r["id"]: r["year"] for r in records}


def brute_force(focal, records):
    """Definitional oracle: scan all (publication, membership) pairs."""
    out = {r["id"]: set(r["reference_ids"]) for r in records}
    years = years_of(records)
    refs = out[focal]
    n_i = n_j = n_k = 0
    for q in out:
        if q == focal:
            continue
        cites_focal = focal in out[q]
        cites_ref = bool(out[q] & refs)
        if cites_focal and cites_ref:
            n_j += 1
        elif cites_focal:
            n_i += 1
        elif cites_ref and years[q] > years[focal]:
            n_k += 1
    denom = n_i + n_j + n_k
    d = (n_i - n_j) / denom if denom else None
    return n_i, n_j, n_k, d


def test_all_pure_citers_gives_plus_one():
    records = [
        record("R", year=1990),
        record("P", year=2000, refs=["R"]),
        record("C1", year=2001, refs=["P"]),
        record("C2", year=2002, refs=["P"]),
        record("C3", year=2003, refs=["P"]),
    ]
    counts = disruption_index("P", graph_of(records), years_of(records))
    assert (counts.n_i, counts.n_j, counts.n_k) == (3, 0, 0)
    assert counts.d == 1.0


def test_all_cociting_citers_gives_minus_one():
    records = [
        record("R", year=1990),
        record("P", year=2000, refs=["R"]),
        record("C1", year=2001, refs=["P", "R"]),
        record("C2", year=2002, refs=["P", "R"]),
    ]
    counts = disruption_index("P", graph_of(records), years_of(records))
    assert (counts.n_i, counts.n_j, counts.n_k) == (0, 2, 0)
    assert counts.d == -1.0


def test_four_node_mixed_example():
    records = [
        record("r1", year=1990),
        record("r2", year=1991),
        record("P", year=2000, refs=["r1", "r2"]),
        record("c1", year=2001, refs=["P"]),
        record("c2", year=2002, refs=["P", "r1"]),
        record("c3", year=2003, refs=["r2"]),
    ]
    counts = disruption_index("P", graph_of(records), years_of(records))
    assert (counts.n_i, counts.n_j, counts.n_k) == (1, 1, 1)
    assert counts.d == 0.0
    assert brute_force("P", records) == (1, 1, 1, 0.0)


def test_no_references_undefined():
    records = [record("P"), record("C", year=2001, refs=["P"])]
    counts = disruption_index("P", graph_of(records), years_of(records))
    assert not counts.defined and counts.reason == REASON_NO_REFS


def test_zero_denominator_undefined():
    records = [record("R", year=1990), record("P", year=2000, refs=["R"])]
    counts = disruption_index("P", graph_of(records), years_of(records))
    assert not counts.defined and counts.reason == REASON_ZERO_DENOMINATOR


def test_same_year_rules():
    # same-year citers count toward n_i/n_j; same-year reference-citers
    # are excluded from n_k (strictly later only)
    records = [
        record("R", year=1990),
        record("P", year=2000, refs=["R"]),
        record("C_same", year=2000, refs=["P"]),
        record("K_same", year=2000, refs=["R"]),
        record("K_late", year=2001, refs=["R"]),
    ]
    counts = disruption_index("P", graph_of(records), years_of(records))
    assert (counts.n_i, counts.n_j, counts.n_k) == (1, 0, 1)


def test_dangling_references_counted_via_their_citers():
    # GHOST has no metadata, but citers of GHOST still feed n_j / n_k
    records = [
        record("P", year=2000, refs=["GHOST"]),
        record("C", year=2001, refs=["P", "GHOST"]),
        record("K", year=2002, refs=["GHOST"]),
    ]
    counts = disruption_index("P", graph_of(records), years_of(records))
    assert (counts.n_i, counts.n_j, counts.n_k) == (0, 1, 1)


def test_monotone_response_to_new_citers():
    base = [
        record("R", year=1990),
        record("P", year=2000, refs=["R"]),
        record("C1", year=2001, refs=["P"]),
        record("C2", year=2002, refs=["P", "R"]),
    ]
    d0 = disruption_index("P", graph_of(base), years_of(base)).d
    with_pure = base + [record("X", year=2003, refs=["P"])]
    d_pure = disruption_index("P", graph_of(with_pure), years_of(with_pure)).d
    with_cocite = base + [record("X", year=2003, refs=["P", "R"])]
    d_cocite = disruption_index("P", graph_of(with_cocite), years_of(with_cocite)).d
    assert d_pure >= d0
    assert d_cocite <= d0


def test_random_graphs_match_brute_force():
    rng = np.random.default_rng(17)
    for _ in range(200):
        n = int(rng.integers(2, 31))
        records = random_citation_records(rng, n, p_edge=float(rng.uniform(0.05, 0.5)))
        graph = graph_of(records)
        years = years_of(records)
        for rec in records:
            if not rec["reference_ids"]:
                continue
            got = disruption_index(rec["id"], graph, years)
            n_i, n_j, n_k, d = brute_force(rec["id"], records)
            assert (got.n_i, got.n_j, got.n_k) == (n_i, n_j, n_k)
            if d is None:
                assert not got.defined
            else:
                assert got.d == d
                assert -1.0 <= got.d <= 1.0


def test_empty_graph_empty_table():
    assert disruption_batch([], CitationGraph({}), {}) == []


def test_batch_orders_by_id_and_keeps_undefined():
    records = [
        record("B", year=2000, refs=["A"]),
        record("A", year=1990),
        record("Z", year=2001),  # no refs -> undefined
        record("C", year=2005, refs=["B"]),
    ]
    rows = disruption_batch(["Z", "B"], graph_of(records), years_of(records))
    assert [r.id for r in rows] == ["B", "Z"]
    assert rows[0].defined and not rows[1].defined


def test_within_ids_restriction():
    records = [
        record("R", year=1990),
        record("P", year=2000, refs=["R"]),
        record("C1", year=2001, refs=["P"]),
        record("C2", year=2002, refs=["P", "R"]),
    ]
    graph, years = graph_of(records), years_of(records)
    unrestricted = disruption_index("P", graph, years)
    restricted = disruption_index("P", graph, years, within_ids={"C1"})
    assert (unrestricted.n_i, unrestricted.n_j) == (1, 1)
    assert (restricted.n_i, restricted.n_j) == (1, 0)


def test_worker_count_invariance():
    rng = np.random.default_rng(23)
    records = random_citation_records(rng, 60, p_edge=0.2)
    graph, years = graph_of(records), years_of(records)
    ids = [r["id"] for r in records]
    rows1 = disruption_batch(ids, graph, years, workers=1)
    rows4 = disruption_batch(ids, graph, years, workers=4)
    assert rows1 == rows4


def test_planted_consolidating_corpus_median_nonpositive(tmp_path):
    spec = SyntheticSpec(
        n_publications=50, dimension=8, seed=29, n_years=5,
        regime_mix={"consolidating": 1.0, "balanced": 0.0, "exploratory": 0.0})
    result = generate_synthetic(spec, tmp_path)
    loaded = load_corpus(result.corpus_path, result.embeddings_path)
    eligible, _ = apply_filters(loaded, FilterPolicy())
    years = {pid: r.year for pid, r in loaded.records.items()}
    rows = disruption_batch(eligible, loaded.graph, years)
    ds = [r.d for r in rows if r.defined]
    assert np.median(ds) <= 0.0


def test_label_ordering_on_mixed_corpus(mixed_synth):
    """Planted corpora must reproduce median d ordering
    exploratory > balanced > consolidating."""
    loaded, _ = mixed_synth
    eligible, _ = apply_filters(loaded, FilterPolicy())
    geo, _, _ = compute_geometry(eligible, loaded.graph, loaded.store, loaded.records)
    years = {pid: r.year for pid, r in loaded.records.items()}
    dis = {r.id: r.d for r in disruption_batch(eligible, loaded.graph, years)
           if r.defined}
    medians = {}
    for lab in ("exploratory", "balanced", "consolidating"):
        ds = [dis[g.id] for g in geo if g.label == lab and g.id in dis]
        medians[lab] = np.median(ds)
    assert medians["exploratory"] > medians["balanced"] > medians["consolidating"]
