import random

import pytest

from derivare.errors import DimensionMismatch, EmptyInput, InvalidConfig, ZeroVector
from derivare.ingest import Chunk
from derivare.provider import HashingEmbedder, MockProvider
from derivare.retrieval import (
    EmbeddingIndex,
    RetrievalConfig,
    build_index,
    cosine_similarity,
    retrieve_top_k,
)
from oracles import brute_force_top_k

WORDS = "credit exam hour week semester course right period library cafeteria thesis enrollment fee".split()


def random_chunks(rng, n, dup_every=0):
    chunks = []
    for i in range(n):
        if dup_every and i % dup_every == 1:
            text = chunks[-1].text  # exact duplicate -> tied scores
        else:
            text = " ".join(rng.choice(WORDS) for _ in range(rng.randint(1, 12)))
        chunks.append(Chunk(f"doc{i % 7}.md#{i:03d}", f"doc{i % 7}.md", text, 0))
    return chunks


class TestCosine:
    def test_identical(self):
        assert cosine_similarity([0.3, -2.0, 5.0], [0.3, -2.0, 5.0]) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine_similarity([1, 0], [0, 1]) == 0.0

    def test_45_degrees(self):
        assert cosine_similarity([1, 0], [1, 1]) == pytest.approx(0.70710678, abs=1e-8)

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine_similarity([1, 0], [1, 0, 0])

    def test_zero(self):
        with pytest.raises(ZeroVector):
            cosine_similarity([0, 0], [1, 0])


class TestIndex:
    def test_build(self):
        emb = HashingEmbedder(dim=64)
        index = build_index(random_chunks(random.Random(0), 5), emb)
        assert len(index) == 5 and index.dim == 64
        assert list(index.chunk_ids) == sorted(index.chunk_ids)

    def test_empty(self):
        with pytest.raises(EmptyInput):
            build_index([], HashingEmbedder())

    def test_round_trip(self, tmp_path):
        chunks = random_chunks(random.Random(1), 12)
        index = build_index(chunks, HashingEmbedder())
        path = tmp_path / "index.jsonl"
        index.save(path)
        assert EmbeddingIndex.load(path, chunks) == index
        header = path.read_text().splitlines()[0]
        assert header == '{"dim": 256}'

    def test_load_rejects_bad_dim(self, tmp_path):
        path = tmp_path / "index.jsonl"
        path.write_text('{"dim": 3}\n{"chunk_id": "a#0", "vector": [1, 2]}\n')
        with pytest.raises(DimensionMismatch):
            EmbeddingIndex.load(path, [Chunk("a#0", "a", "x", 0)])


class TestTopK:
    @pytest.mark.parametrize("k", [1, 3, 10])
    def test_matches_oracle(self, k):
        rng = random.Random(k)
        chunks = random_chunks(rng, 100, dup_every=9)
        emb = HashingEmbedder(dim=64)
        index = build_index(chunks, emb)
        entries = [(cid, index.vectors[i].tolist()) for i, cid in enumerate(index.chunk_ids)]
        for _ in range(20):
            query = " ".join(rng.choice(WORDS) for _ in range(rng.randint(1, 5)))
            got = retrieve_top_k(index, query, RetrievalConfig(k=k, rerank_pool=max(10, k)), emb)
            want = brute_force_top_k(entries, emb.embed([query])[0].tolist(), k)
            assert [g.chunk.chunk_id for g in got] == [w[0] for w in want]
            assert [g.score for g in got] == pytest.approx([w[1] for w in want], abs=1e-12)

    def test_ties_broken_by_chunk_id(self):
        emb = HashingEmbedder()
        chunks = [Chunk(cid, "d", "same text", 0) for cid in ["z#0", "a#0", "m#0"]]
        index = build_index(chunks, emb)
        got = retrieve_top_k(index, "same text", RetrievalConfig(k=3), emb)
        assert [g.chunk.chunk_id for g in got] == ["a#0", "m#0", "z#0"]

    def test_query_text_ranked_first(self):
        rng = random.Random(3)
        emb = HashingEmbedder()
        chunks = random_chunks(rng, 30)
        target = chunks[17]
        index = build_index(chunks, emb)
        # oracle: the target is the unique cosine-1 entry
        entries = [(cid, index.vectors[i].tolist()) for i, cid in enumerate(index.chunk_ids)]
        best = brute_force_top_k(entries, emb.embed([target.text])[0].tolist(), 2)
        assert best[0][0] == target.chunk_id and best[1][1] < 1.0 - 1e-9
        got = retrieve_top_k(index, target.text, RetrievalConfig(k=1), emb)
        assert [g.chunk.chunk_id for g in got] == [target.chunk_id]

    def test_clamp(self):
        emb = HashingEmbedder()
        index = build_index(random_chunks(random.Random(4), 4), emb)
        assert len(retrieve_top_k(index, "credit", RetrievalConfig(k=10), emb)) == 4

    def test_scores_non_increasing(self):
        emb = HashingEmbedder()
        index = build_index(random_chunks(random.Random(5), 50), emb)
        got = retrieve_top_k(index, "exam right", RetrievalConfig(k=20, rerank_pool=20), emb)
        scores = [g.score for g in got]
        assert scores == sorted(scores, reverse=True)

    def test_rerank_uses_scorer(self):
        chunks = [Chunk(f"d#{i}", "d", t, 0) for i, t in enumerate(["exam exam", "exam hours", "library"])]
        mock = MockProvider(scores=[0.1, 0.9, 0.5])
        index = build_index(chunks, mock)
        got = retrieve_top_k(index, "exam", RetrievalConfig(k=2, rerank=True, rerank_pool=3), mock, mock)
        pool_order = [c for c in mock.score_log[0][1]]
        best = pool_order[1]  # scripted 0.9
        assert got[0].chunk.text == best and got[0].score == 0.9
        assert len(got) == 2

    def test_rerank_without_scorer(self):
        emb = HashingEmbedder()
        index = build_index(random_chunks(random.Random(6), 5), emb)
        with pytest.raises(InvalidConfig):
            retrieve_top_k(index, "x", RetrievalConfig(k=1, rerank=True), emb)

    def test_config_validation(self):
        with pytest.raises(InvalidConfig):
            RetrievalConfig(k=0)
        with pytest.raises(InvalidConfig):
            RetrievalConfig(k=5, rerank_pool=3)

    def test_deterministic(self):
        emb = HashingEmbedder()
        index = build_index(random_chunks(random.Random(8), 40, dup_every=4), emb)
        a = retrieve_top_k(index, "course fee", RetrievalConfig(k=5), emb)
        b = retrieve_top_k(index, "course fee", RetrievalConfig(k=5), emb)
        assert a == b
