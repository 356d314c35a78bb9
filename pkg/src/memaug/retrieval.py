"""Retrieval over annotated memory: comprehensive, attribute, and embedding.

Three modes are supported. Comprehensive returns every item in store order.
Attribute retrieval filters by the inverted index and ranks by how many of
the query's attributes an item matched. Embedding retrieval runs an exact
flat cosine scan over a vector index built from the annotations, with two
annotation strategies (each pair embedded independently and averaged, or the
whole rendered annotation as one string) plus a raw-content baseline that
indexes item text directly.

Ties are broken by ascending item id so results are deterministic. Indexes
are immutable after build; searches are pure and can run concurrently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .annotations import Annotation, render_annotation
from .backends import Embedder, l2_normalize
from .errors import (
    DimensionMismatchError,
    EmptyAnnotationError,
    EmptyQueryError,
    StrategyMismatchError,
    ZeroVectorError,
)
from .store import MatchPolicy, MemoryStore
from .validation import ParamsMixin, check_is_fitted, check_positive_int, check_vector


class EmbeddingStrategy(Enum):
    AVERAGED_PAIRS = "averaged_pairs"
    WHOLE_ANNOTATION = "whole_annotation"
    RAW_CONTENT = "raw_content"


class RetrievalMode(Enum):
    COMPREHENSIVE = "comprehensive"
    ATTRIBUTE_BASED = "attribute_based"
    EMBEDDING_BASED = "embedding_based"


class QueryPart(Enum):
    """Components a text query can contribute to its embedding."""

    TEXT = "text"
    ATTRIBUTES = "attributes"


DEFAULT_QUERY_PARTS = (QueryPart.TEXT, QueryPart.ATTRIBUTES)


@dataclass(frozen=True)
class RankedHit:
    item_id: str
    score: float
    rank: int


@dataclass(frozen=True)
class RetrievalResult:
    hits: tuple[RankedHit, ...]
    mode: RetrievalMode

    def ids(self) -> tuple[str, ...]:
        return tuple(hit.item_id for hit in self.hits)

    def __len__(self) -> int:
        return len(self.hits)


@dataclass(frozen=True)
class QueryContext:
    """What is known about a query before retrieval.

    ``annotation`` carries full attribute pairs (mined from a dialogue);
    ``attribute_names`` carries bare names (mined from a question). Either,
    both, or just raw ``text`` may be present.
    """

    text: str | None = None
    annotation: Annotation | None = None
    attribute_names: tuple[str, ...] = ()
    persons: tuple[str, ...] = ()

    def attribute_queries(self) -> list[tuple[str, str | None]]:
        """(name, value) terms for attribute retrieval; value None = any."""
        if self.annotation is not None and len(self.annotation):
            return [(p.name, p.value) for p in self.annotation.pairs]
        return [(name, None) for name in self.attribute_names]


@dataclass(frozen=True)
class QueryVector:
    """An embedded query tagged with the strategy that produced it."""

    values: np.ndarray
    strategy: EmbeddingStrategy


def embed_annotation(
    ann: Annotation, strategy: EmbeddingStrategy, embedder: Embedder
) -> np.ndarray:
    """Embed an annotation under one of the two annotation strategies.

    AVERAGED_PAIRS embeds each ``[name]<value>`` string independently, takes
    the arithmetic mean, and L2-normalizes it, so a single-pair annotation
    embeds exactly like its pair. WHOLE_ANNOTATION embeds the full rendered
    annotation as one string.
    """
    if strategy is EmbeddingStrategy.AVERAGED_PAIRS:
        if len(ann) == 0:
            raise EmptyAnnotationError("cannot average over zero pairs")
        vectors = [embedder.embed(pair.render()) for pair in ann.pairs]
        return l2_normalize(np.mean(vectors, axis=0))
    if strategy is EmbeddingStrategy.WHOLE_ANNOTATION:
        return embedder.embed(render_annotation(ann))
    raise ValueError("RAW_CONTENT embeds item text, not annotations")


@dataclass(frozen=True)
class VectorIndex:
    """Flat exact-scan cosine index; immutable after build."""

    item_ids: tuple[str, ...]
    vectors: np.ndarray  # shape (n, dimension)
    strategy: EmbeddingStrategy
    dimension: int
    norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(set(self.item_ids)) != len(self.item_ids):
            raise ValueError("index item ids must be unique")
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.size and vectors.shape != (len(self.item_ids), self.dimension):
            raise DimensionMismatchError(
                f"expected vectors of shape {(len(self.item_ids), self.dimension)}, "
                f"got {vectors.shape}"
            )
        if not np.all(np.isfinite(vectors)):
            raise ValueError("index vectors contain non-finite entries")
        norms = np.linalg.norm(vectors, axis=1) if vectors.size else np.zeros(0)
        if vectors.size and not np.all(norms > 0):
            raise ZeroVectorError("index contains a zero vector")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "norms", norms)

    def __len__(self) -> int:
        return len(self.item_ids)

    def search(self, query: np.ndarray | QueryVector, k: int) -> RetrievalResult:
        """Exact top-k by cosine similarity over all entries.

        Ties break by ascending item id; min(k, len(index)) hits come back
        with consecutive ranks from 1. Tagged query vectors must match this
        index's strategy.
        """
        check_positive_int(k, "k")
        if isinstance(query, QueryVector):
            if query.strategy is not self.strategy:
                raise StrategyMismatchError(
                    f"query embedded with {query.strategy.value}, "
                    f"index built with {self.strategy.value}"
                )
            query = query.values
        vector = check_vector(query, self.dimension)
        if not len(self.item_ids):
            return RetrievalResult(hits=(), mode=RetrievalMode.EMBEDDING_BASED)
        qnorm = float(np.linalg.norm(vector))
        if qnorm < 1e-12:
            raise ZeroVectorError("query vector has zero norm")
        # Row-wise reduction instead of BLAS matmul: duplicate entries must
        # produce bitwise-equal scores so that exact ties fall through to the
        # id tie-break regardless of row position.
        scores = (self.vectors * vector).sum(axis=1) / (self.norms * qnorm)
        np.clip(scores, -1.0, 1.0, out=scores)
        n = len(scores)
        if k >= n:
            candidates = range(n)
        else:
            threshold = np.partition(scores, n - k)[n - k]
            candidates = np.nonzero(scores >= threshold)[0]
        order = sorted(candidates, key=lambda i: (-scores[i], self.item_ids[i]))[:k]
        hits = tuple(
            RankedHit(item_id=self.item_ids[i], score=float(scores[i]), rank=rank)
            for rank, i in enumerate(order, start=1)
        )
        return RetrievalResult(hits=hits, mode=RetrievalMode.EMBEDDING_BASED)

    def save(self, path: str | Path) -> None:
        record = {
            "strategy": self.strategy.value,
            "dimension": self.dimension,
            "entries": [
                {"id": item_id, "vector": [float(x) for x in vector]}
                for item_id, vector in zip(self.item_ids, self.vectors)
            ],
        }
        Path(path).write_text(json.dumps(record) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        source = Path(path)
        if not source.exists():
            raise FileNotFoundError(f"index file not found: {source}")
        record = json.loads(source.read_text(encoding="utf-8"))
        entries = record["entries"]
        dimension = int(record["dimension"])
        ids = tuple(entry["id"] for entry in entries)
        vectors = (
            np.array([entry["vector"] for entry in entries], dtype=np.float64)
            if entries
            else np.zeros((0, dimension))
        )
        return cls(
            item_ids=ids,
            vectors=vectors,
            strategy=EmbeddingStrategy(record["strategy"]),
            dimension=dimension,
        )


def build_index(
    store: MemoryStore,
    strategy: EmbeddingStrategy,
    embedder: Embedder,
) -> tuple[VectorIndex, list[tuple[str, str]]]:
    """Embed every eligible item; return the index and a skip report.

    Annotation strategies skip items without annotations; the raw-content
    strategy embeds item text regardless. Items whose embedding fails are
    skipped and reported as (item id, reason).
    """
    ids: list[str] = []
    rows: list[np.ndarray] = []
    skipped: list[tuple[str, str]] = []
    dimension: int | None = None
    for entry in store.entries():
        try:
            if strategy is EmbeddingStrategy.RAW_CONTENT:
                vector = embedder.embed(entry.item.content)
            elif entry.annotation is None:
                skipped.append((entry.item.id, "no annotation"))
                continue
            else:
                vector = embed_annotation(entry.annotation, strategy, embedder)
        except (ZeroVectorError, EmptyAnnotationError) as exc:
            skipped.append((entry.item.id, str(exc)))
            continue
        if dimension is None:
            dimension = int(vector.shape[0])
        elif vector.shape[0] != dimension:
            raise DimensionMismatchError(
                f"embedder emitted dimension {vector.shape[0]} after {dimension}"
            )
        ids.append(entry.item.id)
        rows.append(vector)
    if dimension is None:
        dimension = getattr(embedder, "dimension", 0) or 0
    vectors = np.array(rows) if rows else np.zeros((0, dimension))
    index = VectorIndex(
        item_ids=tuple(ids), vectors=vectors, strategy=strategy, dimension=dimension
    )
    return index, skipped


def embed_query(
    query: QueryContext,
    strategy: EmbeddingStrategy,
    embedder: Embedder,
    *,
    parts: Sequence[QueryPart] = DEFAULT_QUERY_PARTS,
) -> QueryVector:
    """Embed a query context consistently with an index strategy.

    A query holding a full annotation embeds through the same path as the
    index entries. A text query (optionally with mined attribute names)
    embeds its selected parts: the raw text and/or the attribute names
    joined by spaces. The raw-content strategy always embeds the text alone.
    """
    if strategy is EmbeddingStrategy.RAW_CONTENT:
        if not query.text:
            raise EmptyQueryError("raw-content queries need query text")
        return QueryVector(embedder.embed(query.text), strategy)
    if query.annotation is not None and len(query.annotation):
        return QueryVector(embed_annotation(query.annotation, strategy, embedder), strategy)
    units: list[str] = []
    if QueryPart.TEXT in parts and query.text:
        units.append(query.text)
    if QueryPart.ATTRIBUTES in parts and query.attribute_names:
        units.append(" ".join(query.attribute_names))
    if not units:
        raise EmptyQueryError("query has no embeddable content for the selected parts")
    if strategy is EmbeddingStrategy.AVERAGED_PAIRS and len(units) > 1:
        vectors = [embedder.embed(unit) for unit in units]
        return QueryVector(l2_normalize(np.mean(vectors, axis=0)), strategy)
    return QueryVector(embedder.embed(" ".join(units)), strategy)


def _comprehensive(store: MemoryStore) -> RetrievalResult:
    hits = tuple(
        RankedHit(item_id=item_id, score=0.0, rank=rank)
        for rank, item_id in enumerate(store.ids(), start=1)
    )
    return RetrievalResult(hits=hits, mode=RetrievalMode.COMPREHENSIVE)


def _attribute_based(
    store: MemoryStore,
    query: QueryContext,
    policy: MatchPolicy,
    k: int | None,
) -> RetrievalResult:
    terms = query.attribute_queries()
    if not terms:
        raise EmptyQueryError("query has no attributes to match")
    matches: list[set[str]] = [
        store.lookup_by_attribute(name, value, policy) for name, value in terms
    ]
    if policy is MatchPolicy.NAME_AND_VALUE:
        candidates = set.intersection(*matches) if matches else set()
        if not candidates:
            candidates = set.union(*matches)
    else:
        candidates = set.union(*matches)
    counts = {item_id: 0 for item_id in candidates}
    for match in matches:
        for item_id in match & candidates:
            counts[item_id] += 1
    ranked = sorted(candidates, key=lambda item_id: (-counts[item_id], item_id))
    if k is not None:
        ranked = ranked[:k]
    hits = tuple(
        RankedHit(item_id=item_id, score=counts[item_id] / len(terms), rank=rank)
        for rank, item_id in enumerate(ranked, start=1)
    )
    return RetrievalResult(hits=hits, mode=RetrievalMode.ATTRIBUTE_BASED)


def retrieve(
    store: MemoryStore,
    query: QueryContext,
    mode: RetrievalMode,
    *,
    k: int = 5,
    policy: MatchPolicy = MatchPolicy.NAME_ONLY,
    index: VectorIndex | None = None,
    embedder: Embedder | None = None,
    query_parts: Sequence[QueryPart] = DEFAULT_QUERY_PARTS,
) -> RetrievalResult:
    """Retrieve from the store under one of the three modes.

    Comprehensive ignores the query and returns everything in store order
    with a zero sentinel score. Attribute mode matches the query's attribute
    terms against the inverted index. Embedding mode embeds the query with
    the index's strategy and runs a top-k cosine search.
    """
    if mode is RetrievalMode.COMPREHENSIVE:
        return _comprehensive(store)
    if mode is RetrievalMode.ATTRIBUTE_BASED:
        return _attribute_based(store, query, policy, k)
    if index is None or embedder is None:
        raise ValueError("embedding retrieval requires an index and an embedder")
    query_vector = embed_query(query, index.strategy, embedder, parts=query_parts)
    return index.search(query_vector, k)


class EmbeddingRetriever(ParamsMixin):
    """Estimator-style wrapper: ``fit`` a store, then query it.

    After ``fit``, ``index_`` holds the vector index and ``skipped_`` the
    items that could not be embedded. ``kneighbors`` searches with a raw
    vector; ``retrieve`` embeds a :class:`QueryContext` first.
    """

    def __init__(
        self,
        embedder: Embedder,
        *,
        strategy: EmbeddingStrategy = EmbeddingStrategy.AVERAGED_PAIRS,
        k: int = 5,
        query_parts: Sequence[QueryPart] = DEFAULT_QUERY_PARTS,
    ):
        self.embedder = embedder
        self.strategy = strategy
        self.k = k
        self.query_parts = tuple(query_parts)
        self.index_: VectorIndex | None = None
        self.skipped_: list[tuple[str, str]] | None = None

    def fit(self, store: MemoryStore) -> "EmbeddingRetriever":
        check_positive_int(self.k, "k")
        self.index_, self.skipped_ = build_index(store, self.strategy, self.embedder)
        return self

    def kneighbors(self, query: np.ndarray | QueryVector, k: int | None = None) -> RetrievalResult:
        check_is_fitted(self, "index_")
        return self.index_.search(query, k if k is not None else self.k)

    def retrieve(self, query: QueryContext, k: int | None = None) -> RetrievalResult:
        check_is_fitted(self, "index_")
        vector = embed_query(query, self.strategy, self.embedder, parts=self.query_parts)
        return self.index_.search(vector, k if k is not None else self.k)
