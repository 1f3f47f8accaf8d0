"""Shared builders for hand-crafted corpora used across the test modules."""

import json

import numpy as np

from citegeom.corpus import load_corpus, write_embeddings_binary, write_embeddings_csv


def record(pub_id, year=2000, venue="V1", tags=("astronomy",), team=1,
           funding=False, doc_type="journal-article", refs=()):
    return {
        "id": pub_id, "year": year, "venue_id": venue,
        "field_tags": list(tags), "team_size": team, "has_funding": funding,
        "doc_type": doc_type, "reference_ids": list(refs),
    }


def write_corpus(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return path


def write_embeddings(path, vectors, dim, binary=True):
    items = sorted(vectors.items())
    if binary:
        write_embeddings_binary(path, dim, items)
    else:
        write_embeddings_csv(path, items)
    return path


def load_tiny(tmp_path, records, vectors=None, dim=4, binary=True):
    """Write and load a small corpus; missing vectors default to random."""
    if vectors is None:
        rng = np.random.default_rng(0)
        vectors = {r["id"]: rng.normal(size=dim) + 3.0 for r in records}
    corpus_path = write_corpus(tmp_path / "corpus.jsonl", records)
    emb_path = write_embeddings(tmp_path / "embeddings.bin", vectors, dim, binary)
    return load_corpus(corpus_path, emb_path)


def random_citation_records(rng, n_nodes, p_edge=0.15, base_year=2000):
    """Random layered graph: node i (year base+i) cites earlier nodes."""
    records = []
    for i in range(n_nodes):
        refs = [f"N{j}" for j in range(i) if rng.random() < p_edge]
        records.append(record(f"N{i}", year=base_year + i, refs=refs))
    return records
