"""
Chunking a corpus and retrieving top-k chunks
=============================================

The hashing embedder is deterministic and offline, so the ranking below is
reproducible on any machine.
"""

from pathlib import Path

from derivare import HashingEmbedder, RetrievalConfig, build_index, chunk_corpus, load_corpus, retrieve_top_k

corpus = Path(__file__).parent / "corpus"
docs = load_corpus(corpus)
chunks = chunk_corpus(docs, max_chars=200, overlap_chars=40)
print(f"{len(docs)} documents, {len(chunks)} chunks")
for c in chunks:
    print(f"  {c.chunk_id:<16} offset {c.char_offset:>4}  {c.text[:50]!r}")

###############################################################################
# Index and query. Scores are cosine similarities, ties broken by chunk id.

embedder = HashingEmbedder(dim=256)
index = build_index(chunks, embedder)
for hit in retrieve_top_k(index, "How long does the right to take the final exam last?", RetrievalConfig(k=3), embedder):
    print(f"{hit.score:.3f}  {hit.chunk.chunk_id}")

###############################################################################
# Reranking rescores a wider cosine pool with a pair scorer. The mock plays
# the cross-encoder with scripted scores handed out in pool order, so the
# third cosine candidate is promoted to first place.

from derivare import MockProvider

scorer = MockProvider(scores=[0.1, 0.2, 0.9, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.05])
cfg = RetrievalConfig(k=2, rerank=True, rerank_pool=min(10, len(chunks)))
for hit in retrieve_top_k(index, "library opening hours", cfg, embedder, scorer):
    print(f"{hit.score:.2f}  {hit.chunk.chunk_id}")
