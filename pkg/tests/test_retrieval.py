"""Retrieval engine tests: embedding strategies, flat search, modes."""

import numpy as np
import pytest

from oracles import brute_force_topk

from memaug import (
    Annotation,
    AttributePair,
    DimensionMismatchError,
    EmbeddingRetriever,
    EmbeddingStrategy,
    EmptyAnnotationError,
    EmptyQueryError,
    Granularity,
    HashEmbedder,
    ItemKind,
    MatchPolicy,
    MemoryItem,
    MemoryStore,
    NotFittedError,
    Perspective,
    QueryContext,
    QueryPart,
    RetrievalMode,
    StrategyMismatchError,
    VectorIndex,
    ZeroVectorError,
    build_index,
    embed_annotation,
    embed_query,
    retrieve,
)


def entity_store(annotations: dict[str, Annotation], contents: dict[str, str] | None = None):
    store = MemoryStore()
    for item_id, annotation in annotations.items():
        content = (contents or {}).get(item_id, f"content of {item_id}")
        store.write(
            MemoryItem(id=item_id, kind=ItemKind.ENTITY, content=content), annotation
        )
    return store


def single_pair(name: str, value: str) -> Annotation:
    return Annotation(
        pairs=(AttributePair(name, value),),
        perspective=Perspective.ENTITY_CENTRIC,
        granularity=Granularity.NOT_APPLICABLE,
    )


class TestEmbedAnnotation:
    def test_single_pair_equals_pair_embedding(self):
        embedder = HashEmbedder(8)
        ann = single_pair("genre", "noir")
        averaged = embed_annotation(ann, EmbeddingStrategy.AVERAGED_PAIRS, embedder)
        direct = embedder.embed("[genre]<noir>")
        assert float(averaged @ direct) >= 1.0 - 1e-9

    def test_two_pairs_mean_then_normalize(self):
        embedder = HashEmbedder(8)
        ann = Annotation(pairs=(AttributePair("a", "1"), AttributePair("b", "2")))
        expected = (embedder.embed("[a]<1>") + embedder.embed("[b]<2>")) / 2
        expected = expected / np.linalg.norm(expected)
        got = embed_annotation(ann, EmbeddingStrategy.AVERAGED_PAIRS, embedder)
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_strategies_differ_on_multi_token_annotation(self):
        embedder = HashEmbedder(8)
        ann = Annotation(
            pairs=(
                AttributePair("genre", "noir"),
                AttributePair("setting", "los angeles"),
                AttributePair("plot", "a long heist gone wrong"),
            )
        )
        averaged = embed_annotation(ann, EmbeddingStrategy.AVERAGED_PAIRS, embedder)
        whole = embed_annotation(ann, EmbeddingStrategy.WHOLE_ANNOTATION, embedder)
        assert float(averaged @ whole) < 0.99

    def test_empty_annotation_rejected_for_averaging(self):
        with pytest.raises(EmptyAnnotationError):
            embed_annotation(Annotation(), EmbeddingStrategy.AVERAGED_PAIRS, HashEmbedder(8))

    def test_whole_annotation_embeds_rendered_string(self):
        embedder = HashEmbedder(8)
        ann = Annotation(pairs=(AttributePair("a", "1"), AttributePair("b", "2")))
        np.testing.assert_array_equal(
            embed_annotation(ann, EmbeddingStrategy.WHOLE_ANNOTATION, embedder),
            embedder.embed("[a]<1> [b]<2>"),
        )


class TestBuildIndex:
    def test_counts_and_dimension(self):
        store = entity_store({f"m{i}": single_pair("k", f"v{i}") for i in range(5)})
        index, skipped = build_index(store, EmbeddingStrategy.AVERAGED_PAIRS, HashEmbedder(8))
        assert len(index) == 5
        assert index.dimension == 8
        assert skipped == []

    def test_unannotated_items_skipped_and_reported(self):
        store = entity_store({f"m{i}": single_pair("k", f"v{i}") for i in range(4)})
        store.write(MemoryItem(id="m9", kind=ItemKind.ENTITY, content="no annotation"))
        index, skipped = build_index(store, EmbeddingStrategy.AVERAGED_PAIRS, HashEmbedder(8))
        assert len(index) == 4
        assert skipped == [("m9", "no annotation")]

    def test_raw_content_ignores_annotations(self):
        store = entity_store({f"m{i}": single_pair("k", f"v{i}") for i in range(4)})
        store.write(MemoryItem(id="m9", kind=ItemKind.ENTITY, content="plain text"))
        index, skipped = build_index(store, EmbeddingStrategy.RAW_CONTENT, HashEmbedder(8))
        assert len(index) == 5
        assert skipped == []

    def test_dimension_drift_rejected(self):
        class Drifting:
            def __init__(self):
                self.calls = 0
                self.dimension = 4

            def embed(self, text):
                self.calls += 1
                return np.ones(4 if self.calls == 1 else 5)

        store = entity_store({"a": single_pair("k", "1"), "b": single_pair("k", "2")})
        with pytest.raises(DimensionMismatchError):
            build_index(store, EmbeddingStrategy.RAW_CONTENT, Drifting())


class TestSearch:
    def make_index(self, vectors, ids=None):
        vectors = np.asarray(vectors, dtype=np.float64)
        ids = tuple(ids or (f"m{i:03d}" for i in range(len(vectors))))
        return VectorIndex(
            item_ids=ids,
            vectors=vectors,
            strategy=EmbeddingStrategy.RAW_CONTENT,
            dimension=vectors.shape[1],
        )

    def test_self_match_rank_one(self):
        rng = np.random.default_rng(3)
        vectors = rng.normal(size=(20, 8))
        index = self.make_index(vectors)
        result = index.search(vectors[7], k=1)
        assert result.hits[0].item_id == "m007"
        assert result.hits[0].score == pytest.approx(1.0, abs=1e-6)
        assert result.hits[0].rank == 1

    def test_orthogonal_entries_score_zero(self):
        index = self.make_index([[1.0, 0.0], [2.0, 0.0], [5.0, 0.0]])
        result = index.search(np.array([0.0, 3.0]), k=3)
        assert [hit.score for hit in result.hits] == [0.0, 0.0, 0.0]

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(17)
        vectors = rng.normal(size=(200, 8))
        # duplicate rows force exact ties
        vectors[50] = vectors[10]
        vectors[51] = vectors[10]
        index = self.make_index(vectors)
        query = rng.normal(size=8)
        result = index.search(query, k=10)
        expected = brute_force_topk(index.item_ids, vectors.tolist(), query.tolist(), 10)
        assert list(result.ids()) == expected

    def test_exact_ties_broken_by_id(self):
        vector = [0.5, 0.5]
        index = self.make_index([vector, vector, vector], ids=("zz", "aa", "mm"))
        result = index.search(np.array(vector), k=3)
        assert result.ids() == ("aa", "mm", "zz")

    def test_monotone_k_prefix(self):
        rng = np.random.default_rng(23)
        vectors = rng.normal(size=(40, 8))
        index = self.make_index(vectors)
        query = rng.normal(size=8)
        previous: tuple[str, ...] = ()
        for k in range(1, 15):
            ids = index.search(query, k).ids()
            assert ids[: len(previous)] == previous
            previous = ids

    def test_returns_min_k_n(self):
        index = self.make_index(np.eye(3))
        assert len(index.search(np.array([1.0, 0.0, 0.0]), k=10)) == 3

    def test_scores_non_increasing_and_bounded(self):
        rng = np.random.default_rng(29)
        index = self.make_index(rng.normal(size=(50, 8)))
        result = index.search(rng.normal(size=8), k=50)
        scores = [hit.score for hit in result.hits]
        assert all(-1.0 <= s <= 1.0 for s in scores)
        assert all(a >= b for a, b in zip(scores, scores[1:]))
        assert [hit.rank for hit in result.hits] == list(range(1, 51))

    def test_k_validation(self):
        index = self.make_index(np.eye(2))
        with pytest.raises(ValueError):
            index.search(np.array([1.0, 0.0]), k=0)

    def test_dimension_mismatch(self):
        index = self.make_index(np.eye(3))
        with pytest.raises(DimensionMismatchError):
            index.search(np.array([1.0, 0.0]), k=1)

    def test_zero_query_rejected(self):
        index = self.make_index(np.eye(2))
        with pytest.raises(ZeroVectorError):
            index.search(np.zeros(2), k=1)

    def test_empty_index(self):
        index = VectorIndex(
            item_ids=(), vectors=np.zeros((0, 4)),
            strategy=EmbeddingStrategy.RAW_CONTENT, dimension=4,
        )
        assert len(index.search(np.ones(4), k=5)) == 0

    def test_strategy_mismatch_checked(self):
        from memaug.retrieval import QueryVector

        index = self.make_index(np.eye(2))
        tagged = QueryVector(np.array([1.0, 0.0]), EmbeddingStrategy.AVERAGED_PAIRS)
        with pytest.raises(StrategyMismatchError):
            index.search(tagged, k=1)

    def test_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(31)
        index = self.make_index(rng.normal(size=(10, 8)))
        path = tmp_path / "index.json"
        index.save(path)
        loaded = VectorIndex.load(path)
        assert loaded.item_ids == index.item_ids
        assert loaded.strategy is index.strategy
        np.testing.assert_array_equal(loaded.vectors, index.vectors)

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            VectorIndex.load(tmp_path / "nope.json")


class TestEmbedQuery:
    def test_annotation_query_uses_index_strategy(self):
        embedder = HashEmbedder(8)
        ann = single_pair("genre", "noir")
        query = QueryContext(annotation=ann)
        out = embed_query(query, EmbeddingStrategy.AVERAGED_PAIRS, embedder)
        np.testing.assert_array_equal(
            out.values, embed_annotation(ann, EmbeddingStrategy.AVERAGED_PAIRS, embedder)
        )

    def test_text_only_part(self):
        embedder = HashEmbedder(8)
        query = QueryContext(text="what about x", attribute_names=("genre",))
        out = embed_query(
            query, EmbeddingStrategy.AVERAGED_PAIRS, embedder, parts=(QueryPart.TEXT,)
        )
        np.testing.assert_array_equal(out.values, embedder.embed("what about x"))

    def test_text_and_attributes_averaged(self):
        embedder = HashEmbedder(8)
        query = QueryContext(text="what about x", attribute_names=("genre", "year"))
        out = embed_query(query, EmbeddingStrategy.AVERAGED_PAIRS, embedder)
        mean = (embedder.embed("what about x") + embedder.embed("genre year")) / 2
        np.testing.assert_allclose(out.values, mean / np.linalg.norm(mean), atol=1e-12)

    def test_raw_content_requires_text(self):
        with pytest.raises(EmptyQueryError):
            embed_query(QueryContext(), EmbeddingStrategy.RAW_CONTENT, HashEmbedder(8))

    def test_no_embeddable_content(self):
        with pytest.raises(EmptyQueryError):
            embed_query(QueryContext(), EmbeddingStrategy.AVERAGED_PAIRS, HashEmbedder(8))


class TestRetrieve:
    @pytest.fixture
    def store(self):
        return entity_store(
            {
                "a": single_pair("genre", "Drama"),
                "b": single_pair("genre", "Action"),
            }
        )

    def test_comprehensive_returns_all_in_store_order(self):
        store = entity_store({f"m{i:03d}": single_pair("k", f"v{i}") for i in range(144)})
        result = retrieve(store, QueryContext(), RetrievalMode.COMPREHENSIVE)
        assert len(result) == 144
        assert result.ids()[:3] == ("m000", "m001", "m002")
        assert all(hit.score == 0.0 for hit in result.hits)

    def test_attribute_union(self, store):
        query = QueryContext(attribute_names=("genre",))
        result = retrieve(store, query, RetrievalMode.ATTRIBUTE_BASED)
        assert set(result.ids()) == {"a", "b"}

    def test_attribute_ranking_by_matched_count_then_id(self):
        store = entity_store(
            {
                "x": Annotation(pairs=(AttributePair("a", "1"), AttributePair("b", "2"))),
                "y": single_pair("a", "1"),
                "z": single_pair("b", "2"),
            }
        )
        query = QueryContext(attribute_names=("a", "b"))
        result = retrieve(store, query, RetrievalMode.ATTRIBUTE_BASED)
        assert result.ids() == ("x", "y", "z")
        assert result.hits[0].score == pytest.approx(1.0)
        assert result.hits[1].score == pytest.approx(0.5)

    def test_attribute_intersection_first_with_values(self):
        store = entity_store(
            {
                "x": Annotation(pairs=(AttributePair("a", "1"), AttributePair("b", "2"))),
                "y": single_pair("a", "1"),
            }
        )
        query = QueryContext(
            annotation=Annotation(pairs=(AttributePair("a", "1"), AttributePair("b", "2")))
        )
        result = retrieve(
            store, query, RetrievalMode.ATTRIBUTE_BASED, policy=MatchPolicy.NAME_AND_VALUE
        )
        assert result.ids() == ("x",)

    def test_attribute_intersection_falls_back_to_union(self):
        store = entity_store(
            {"x": single_pair("a", "1"), "y": single_pair("b", "2")}
        )
        query = QueryContext(
            annotation=Annotation(pairs=(AttributePair("a", "1"), AttributePair("b", "2")))
        )
        result = retrieve(
            store, query, RetrievalMode.ATTRIBUTE_BASED, policy=MatchPolicy.NAME_AND_VALUE
        )
        assert set(result.ids()) == {"x", "y"}

    def test_empty_query_attributes(self, store):
        with pytest.raises(EmptyQueryError):
            retrieve(store, QueryContext(text="hello"), RetrievalMode.ATTRIBUTE_BASED)

    def test_embedding_unique_attribute_ranks_first(self):
        # every item carries a unique attribute; the query carries item 7's
        store = entity_store({f"m{i}": single_pair(f"key{i}", f"val{i}") for i in range(20)})
        embedder = HashEmbedder(8)
        index, _ = build_index(store, EmbeddingStrategy.AVERAGED_PAIRS, embedder)
        query = QueryContext(annotation=single_pair("key7", "val7"))
        result = retrieve(
            store, query, RetrievalMode.EMBEDDING_BASED, k=5, index=index, embedder=embedder
        )
        assert result.hits[0].item_id == "m7"
        assert result.hits[0].score == pytest.approx(1.0, abs=1e-9)
        expected = brute_force_topk(
            index.item_ids,
            index.vectors.tolist(),
            embed_annotation(single_pair("key7", "val7"), EmbeddingStrategy.AVERAGED_PAIRS, embedder).tolist(),
            5,
        )
        assert list(result.ids()) == expected

    def test_embedding_requires_index(self, store):
        with pytest.raises(ValueError):
            retrieve(store, QueryContext(text="x"), RetrievalMode.EMBEDDING_BASED)


class TestEmbeddingRetriever:
    def test_fit_then_retrieve(self):
        store = entity_store({f"m{i}": single_pair(f"key{i}", f"val{i}") for i in range(10)})
        retriever = EmbeddingRetriever(HashEmbedder(8), k=3)
        assert retriever.fit(store) is retriever
        result = retriever.retrieve(QueryContext(annotation=single_pair("key4", "val4")))
        assert result.hits[0].item_id == "m4"
        assert len(result) == 3

    def test_not_fitted(self):
        retriever = EmbeddingRetriever(HashEmbedder(8))
        with pytest.raises(NotFittedError):
            retriever.kneighbors(np.ones(8))

    def test_get_set_params(self):
        retriever = EmbeddingRetriever(HashEmbedder(8), k=3)
        params = retriever.get_params()
        assert params["k"] == 3
        assert params["strategy"] is EmbeddingStrategy.AVERAGED_PAIRS
        retriever.set_params(k=7)
        assert retriever.k == 7
        with pytest.raises(ValueError):
            retriever.set_params(bogus=1)

    def test_kneighbors_with_raw_vector(self):
        store = entity_store({f"m{i}": single_pair(f"key{i}", f"val{i}") for i in range(6)})
        embedder = HashEmbedder(8)
        retriever = EmbeddingRetriever(embedder, k=2).fit(store)
        vector = embed_annotation(
            single_pair("key2", "val2"), EmbeddingStrategy.AVERAGED_PAIRS, embedder
        )
        assert retriever.kneighbors(vector).hits[0].item_id == "m2"

    def test_skip_report_exposed(self):
        store = entity_store({"a": single_pair("k", "v")})
        store.write(MemoryItem(id="plain", kind=ItemKind.ENTITY, content="text"))
        retriever = EmbeddingRetriever(HashEmbedder(8)).fit(store)
        assert retriever.skipped_ == [("plain", "no annotation")]


def test_deterministic_results_across_runs():
    store = entity_store({f"m{i}": single_pair(f"key{i}", f"word{i} extra") for i in range(30)})
    query = QueryContext(annotation=single_pair("key3", "word3 extra"))

    def run():
        embedder = HashEmbedder(8)
        index, _ = build_index(store, EmbeddingStrategy.AVERAGED_PAIRS, embedder)
        return retrieve(
            store, query, RetrievalMode.EMBEDDING_BASED, k=10, index=index, embedder=embedder
        )

    assert run() == run()
