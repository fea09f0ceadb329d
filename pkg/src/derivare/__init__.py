"""Retrieval-augmented question answering with derivation prompting.

Retrieved chunks become the initial hypotheses of a derivation tree. The model
grows the tree by applying a small catalogue of natural-language rules until
it reaches a conclusion that answers the question.
"""

from .core import (
    DerivationStep,
    DerivationTree,
    Hypothesis,
    Rule,
    TreeStatus,
    apply_step,
    next_label,
    parse_tree_json,
    render_tree,
    validate_tree,
    validation_notes,
)
from .engine import (
    EngineConfig,
    FewShotExample,
    GenerationStrategy,
    Mode,
    answer_long_context,
    answer_plain_rag,
    parse_derivation_transcript,
    parse_step_line,
    run_derivation,
)
from .evaluation import (
    JudgeVerdict,
    QaRecord,
    ScoreRubric,
    aggregate,
    build_judge_prompt,
    classify_score,
    parse_judge_output,
    run_eval,
    summary_from_counts,
)
from .ingest import Chunk, Document, chunk_corpus, chunk_document, load_corpus
from .provider import GenerationRequest, HashingEmbedder, MockProvider, RemoteProvider
from .retrieval import EmbeddingIndex, RetrievalConfig, ScoredChunk, build_index, retrieve_top_k

__version__ = "0.1.0"

__all__ = [
    "Chunk",
    "DerivationStep",
    "DerivationTree",
    "Document",
    "EmbeddingIndex",
    "EngineConfig",
    "FewShotExample",
    "GenerationRequest",
    "GenerationStrategy",
    "HashingEmbedder",
    "Hypothesis",
    "JudgeVerdict",
    "MockProvider",
    "Mode",
    "QaRecord",
    "RemoteProvider",
    "RetrievalConfig",
    "Rule",
    "ScoreRubric",
    "ScoredChunk",
    "TreeStatus",
    "aggregate",
    "answer_long_context",
    "answer_plain_rag",
    "apply_step",
    "build_index",
    "build_judge_prompt",
    "chunk_corpus",
    "chunk_document",
    "classify_score",
    "load_corpus",
    "next_label",
    "parse_derivation_transcript",
    "parse_judge_output",
    "parse_step_line",
    "parse_tree_json",
    "render_tree",
    "retrieve_top_k",
    "run_derivation",
    "run_eval",
    "summary_from_counts",
    "validate_tree",
    "validation_notes",
]
