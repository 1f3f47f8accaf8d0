"""Corpus ingestion: publication records, embeddings, citation indexes, filters.

Input formats
-------------
corpus.jsonl
    One JSON object per line with keys: id, year, venue_id, field_tags,
    team_size, has_funding, doc_type, reference_ids.

embeddings file
    Either the binary format written by `write_embeddings_binary`
    (magic ``EMB1``, uint32 dimension, uint64 count, then per record a
    uint16 id length, the UTF-8 id bytes, and `dimension` little-endian
    float32 values), or a plain-text CSV fallback ``id,v0,...,v{d-1}``.

References may point outside the loaded corpus ("dangling"); those edges
are kept in the graph (the id is known, metadata is not) and count toward
reference-count filters.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

EMBEDDING_MAGIC = b"EMB1"

KNOWN_DOC_TYPES = ("journal-article", "conference-paper", "other")


class CorpusFormatError(ValueError):
    """Malformed corpus or embedding input; message carries line/id context."""


@dataclass(frozen=True)
class Publication:
    """One publication's metadata as loaded from the snapshot."""

    id: str
    year: int
    venue_id: str
    field_tags: frozenset
    team_size: int
    has_funding: bool
    doc_type: str
    reference_ids: tuple


@dataclass(frozen=True)
class FilterPolicy:
    """Eligibility thresholds applied to the raw (unfiltered) graph.

    `citation_field_tag`, when set, counts only citers carrying that
    field tag toward the citation threshold; the default counts every
    loaded citer.
    """

    min_references: int = 10
    min_citations: int = 5
    allowed_doc_types: frozenset = frozenset({"journal-article", "conference-paper"})
    require_embedding: bool = True
    citation_field_tag: str = ""

    def __post_init__(self):
        if self.min_references < 0 or self.min_citations < 0:
            raise ValueError("filter thresholds must be non-negative")


class EmbeddingStore:
    """Dense fixed-dimension vector per publication id.

    Vectors are held in one float32 matrix; lookups return float64 row
    copies so downstream accumulation happens in double precision.
    """

    def __init__(self, dimension: int, ids: Sequence[str], matrix: np.ndarray):
        if matrix.shape != (len(ids), dimension):
            raise ValueError("embedding matrix shape mismatch")
        self.dimension = int(dimension)
        self._index = {pid: i for i, pid in enumerate(ids)}
        if len(self._index) != len(ids):
            raise CorpusFormatError("duplicate id in embedding file")
        self._matrix = np.ascontiguousarray(matrix, dtype=np.float32)

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, pub_id: str) -> bool:
        return pub_id in self._index

    def ids(self):
        return self._index.keys()

    def get(self, pub_id: str):
        row = self._index.get(pub_id)
        if row is None:
            return None
        return self._matrix[row].astype(np.float64)

    def rows(self, pub_ids: Iterable[str]) -> np.ndarray:
        """Matrix of vectors for ids present in the store (float64)."""
        idx = [self._index[p] for p in pub_ids if p in self._index]
        return self._matrix[idx].astype(np.float64)

    def scaled(self, factor: float) -> "EmbeddingStore":
        """Copy with every vector multiplied by `factor` (testing aid)."""
        ids = list(self._index.keys())
        return EmbeddingStore(self.dimension, ids, self._matrix * np.float32(factor))

    def transformed(self, matrix: np.ndarray) -> "EmbeddingStore":
        """Copy with every vector mapped through `matrix` (testing aid)."""
        ids = list(self._index.keys())
        new = (self._matrix.astype(np.float64) @ matrix.T).astype(np.float32)
        return EmbeddingStore(new.shape[1], ids, new)


class CitationGraph:
    """Forward and backward citation indexes over the raw corpus.

    `out_edges[p]` lists the ids p cites (its references, possibly
    dangling); `in_edges[q]` lists loaded publications citing q and is the
    exact transpose of `out_edges`. Adjacency lists are sorted so two
    loads of the same files produce identical indexes.
    """

    def __init__(self, out_edges: Mapping[str, tuple]):
        self.out_edges = {p: tuple(refs) for p, refs in out_edges.items()}
        in_edges: dict = {}
        for citing, refs in self.out_edges.items():
            for ref in refs:
                in_edges.setdefault(ref, []).append(citing)
        self.in_edges = {q: tuple(sorted(cs)) for q, cs in in_edges.items()}
        self.edge_count = sum(len(r) for r in self.out_edges.values())

    def references(self, pub_id: str) -> tuple:
        return self.out_edges.get(pub_id, ())

    def citers(self, pub_id: str) -> tuple:
        return self.in_edges.get(pub_id, ())


@dataclass
class LoadReport:
    """Per-load diagnostics surfaced to the ingest report."""

    n_records: int = 0
    n_edges: int = 0
    n_embeddings: int = 0
    embedding_dimension: int = 0
    missing_embedding_ids: list = field(default_factory=list)
    zero_norm_ids: list = field(default_factory=list)
    n_dangling_refs: int = 0

    def to_dict(self) -> dict:
        return {
            "n_records": self.n_records,
            "n_edges": self.n_edges,
            "n_embeddings": self.n_embeddings,
            "embedding_dimension": self.embedding_dimension,
            "missing_embedding_ids": sorted(self.missing_embedding_ids),
            "zero_norm_ids": sorted(self.zero_norm_ids),
            "n_dangling_refs": self.n_dangling_refs,
        }


@dataclass
class LoadedCorpus:
    """Everything `load_corpus` produces; immutable after load."""

    records: dict
    store: EmbeddingStore
    graph: CitationGraph
    report: LoadReport

    def record(self, pub_id: str) -> Publication:
        return self.records[pub_id]

    def year_of(self, pub_id: str):
        rec = self.records.get(pub_id)
        return None if rec is None else rec.year


@dataclass
class FilterReport:
    """Non-exclusive failure counts; one record may fail several tests."""

    n_input: int = 0
    n_eligible: int = 0
    failed_min_references: int = 0
    failed_min_citations: int = 0
    failed_doc_type: int = 0
    failed_embedding: int = 0

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def _parse_record(obj: dict, line_no: int) -> Publication:
    required = ("id", "year", "venue_id", "field_tags", "team_size",
                "has_funding", "doc_type", "reference_ids")
    for key in required:
        if key not in obj:
            raise CorpusFormatError(f"line {line_no}: missing key '{key}'")
    pub_id = str(obj["id"])
    refs = [str(r) for r in obj["reference_ids"]]
    if len(set(refs)) != len(refs):
        raise CorpusFormatError(f"line {line_no}: duplicate reference ids in '{pub_id}'")
    if pub_id in refs:
        raise CorpusFormatError(f"line {line_no}: '{pub_id}' references itself")
    team_size = int(obj["team_size"])
    if team_size < 1:
        raise CorpusFormatError(f"line {line_no}: team_size < 1 in '{pub_id}'")
    doc_type = str(obj["doc_type"])
    if doc_type not in KNOWN_DOC_TYPES:
        doc_type = "other"
    return Publication(
        id=pub_id,
        year=int(obj["year"]),
        venue_id=str(obj["venue_id"]),
        field_tags=frozenset(str(t) for t in obj["field_tags"]),
        team_size=team_size,
        has_funding=bool(obj["has_funding"]),
        doc_type=doc_type,
        reference_ids=tuple(refs),
    )


def read_corpus_jsonl(path) -> dict:
    """Parse the snapshot file into an id-keyed record dict.

    Raises CorpusFormatError with the 1-based line number on malformed
    rows and on duplicate publication ids.
    """
    records: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise CorpusFormatError(f"line {line_no}: expected a JSON object")
            rec = _parse_record(obj, line_no)
            if rec.id in records:
                raise CorpusFormatError(f"line {line_no}: duplicate publication id '{rec.id}'")
            records[rec.id] = rec
    return records


def _read_embeddings_binary(path) -> tuple:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EMBEDDING_MAGIC:
            raise CorpusFormatError("bad magic bytes in embedding file")
        dim = struct.unpack("<I", fh.read(4))[0]
        count = struct.unpack("<Q", fh.read(8))[0]
        ids = []
        rows = np.empty((count, dim), dtype=np.float32)
        for i in range(count):
            raw = fh.read(2)
            if len(raw) != 2:
                raise CorpusFormatError(f"embedding record {i}: truncated header")
            id_len = struct.unpack("<H", raw)[0]
            pid = fh.read(id_len).decode("utf-8")
            buf = fh.read(4 * dim)
            if len(buf) != 4 * dim:
                raise CorpusFormatError(f"embedding record {i} ('{pid}'): truncated vector")
            ids.append(pid)
            rows[i] = np.frombuffer(buf, dtype="<f4")
    return dim, ids, rows


def _read_embeddings_csv(path) -> tuple:
    ids = []
    vectors = []
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 2:
                raise CorpusFormatError(f"line {line_no}: expected id and vector values")
            if dim is None:
                dim = len(parts) - 1
            elif len(parts) - 1 != dim:
                raise CorpusFormatError(
                    f"line {line_no}: dimension mismatch ({len(parts) - 1} != {dim})"
                )
            ids.append(parts[0])
            try:
                vectors.append([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise CorpusFormatError(f"line {line_no}: non-numeric value") from exc
    if dim is None:
        raise CorpusFormatError("empty embedding file")
    return dim, ids, np.asarray(vectors, dtype=np.float32)


def load_embeddings(path) -> tuple:
    """Read an embedding file (binary or CSV) into (dim, ids, matrix)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == EMBEDDING_MAGIC:
        return _read_embeddings_binary(path)
    return _read_embeddings_csv(path)


def write_embeddings_binary(path, dimension: int, items: Iterable) -> int:
    """Write (id, vector) pairs in the binary ingest format; returns count."""
    items = list(items)
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<I", dimension))
        fh.write(struct.pack("<Q", len(items)))
        for pid, vec in items:
            raw = pid.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(np.asarray(vec, dtype="<f4").tobytes())
    return len(items)


def write_embeddings_csv(path, items: Iterable) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for pid, vec in items:
            fh.write(pid + "," + ",".join(repr(float(v)) for v in vec) + "\n")
            n += 1
    return n


def load_corpus(metadata_path, embedding_path) -> LoadedCorpus:
    """Load the snapshot and embeddings, build citation indexes.

    Zero-norm vectors are dropped from the store and flagged in the
    report (the record stays loaded but cannot enter geometry). Non-finite
    vector values abort the load.
    """
    metadata_path = Path(metadata_path)
    embedding_path = Path(embedding_path)
    records = read_corpus_jsonl(metadata_path)

    dim, emb_ids, matrix = load_embeddings(embedding_path)
    if not np.isfinite(matrix).all():
        bad = emb_ids[int(np.argwhere(~np.isfinite(matrix).all(axis=1))[0][0])]
        raise CorpusFormatError(f"non-finite embedding values for '{bad}'")
    norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
    keep = norms > 0.0
    zero_norm_ids = [emb_ids[i] for i in np.flatnonzero(~keep)]
    store = EmbeddingStore(dim, [emb_ids[i] for i in np.flatnonzero(keep)], matrix[keep])

    graph = CitationGraph({pid: rec.reference_ids for pid, rec in records.items()})

    report = LoadReport(
        n_records=len(records),
        n_edges=graph.edge_count,
        n_embeddings=len(store),
        embedding_dimension=dim,
        missing_embedding_ids=[pid for pid in records if pid not in store],
        zero_norm_ids=zero_norm_ids,
        n_dangling_refs=sum(
            1 for refs in graph.out_edges.values() for r in refs if r not in records
        ),
    )
    return LoadedCorpus(records=records, store=store, graph=graph, report=report)


def apply_filters(corpus: LoadedCorpus, policy: FilterPolicy) -> tuple:
    """Return (sorted eligible id list, FilterReport).

    Reference and citation counts are measured on the raw graph: the
    thresholds describe the publication's total context, not the part of
    it that survives filtering. Citations are counted over all loaded
    citers regardless of their own eligibility.
    """
    report = FilterReport(n_input=len(corpus.records))
    tag = policy.citation_field_tag
    eligible = []
    for pid, rec in corpus.records.items():
        ok = True
        if len(rec.reference_ids) < policy.min_references:
            report.failed_min_references += 1
            ok = False
        citers = corpus.graph.citers(pid)
        if tag:
            n_cites = sum(1 for c in citers if c in corpus.records
                          and tag in corpus.records[c].field_tags)
        else:
            n_cites = len(citers)
        if n_cites < policy.min_citations:
            report.failed_min_citations += 1
            ok = False
        if rec.doc_type not in policy.allowed_doc_types:
            report.failed_doc_type += 1
            ok = False
        if policy.require_embedding and pid not in corpus.store:
            report.failed_embedding += 1
            ok = False
        if ok:
            eligible.append(pid)
    eligible.sort()
    report.n_eligible = len(eligible)
    return eligible, report
