"""Answer generation: derivation prompting and the two plain baselines.

A derivation is produced in one of two modes:

``ONE_STEP``
    One model call per rule application; each reply is a single transcript line.
``WHOLE``
    A few-shot prompt asks the model for the whole transcript in one call,
    which is then parsed and replayed step by step.

Transcript lines have four ``|``-separated fields::

    Extract | 2 | A credit is a measure of ... | Not a final answer
    Concat | a,c | ... | Final answer

Lines without a ``|`` (question echoes, ``New hypothesis:`` blocks) are ignored.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

from .core import (
    DerivationStep,
    DerivationTree,
    Rule,
    TreeStatus,
    apply_step,
    parse_rule,
)
from .errors import (
    ArityMismatch,
    BadFinalityMarker,
    ContextOverflow,
    DerivationError,
    EmptyConclusion,
    EmptyHypotheses,
    EmptyInput,
    InvalidConfig,
    MalformedLine,
    MissingFinal,
    ProviderError,
    StepBudgetExceeded,
    StepsAfterFinal,
    TreeAlreadyFinal,
)
from .ingest import Chunk, Document
from .provider import GenerationRequest, Generator
from .templates import check_language, fill_template, load_template, read_data

logger = logging.getLogger(__name__)

DEFAULT_MAX_STEPS = 12
# roughly the 200k-token window of the long-context models, at ~3 chars per token
DEFAULT_MAX_CONTEXT_CHARS = 600_000

_WORDS = {
    "en": {
        "hypotheses": "Hypotheses:",
        "question": "User question:",
        "example": "Example",
        "new_hypothesis": "New hypothesis:",
        "final": "Final answer",
        "not_final": "Not a final answer",
        "no_steps": "(none)",
    },
    "es": {
        "hypotheses": "Hipótesis:",
        "question": "Pregunta del usuario:",
        "example": "Ejemplo",
        "new_hypothesis": "Nueva hipótesis:",
        "final": "Respuesta final",
        "not_final": "No es una respuesta final",
        "no_steps": "(ninguno)",
    },
}

_FINAL_MARKERS = {"final answer", "final", "respuesta final"}
_NOT_FINAL_MARKERS = {
    "not a final answer",
    "not final answer",
    "not final",
    "no es una respuesta final",
    "no es respuesta final",
    "no final",
}


class Mode(str, Enum):
    ONE_STEP = "one-step"
    WHOLE = "whole"


class GenerationStrategy(str, Enum):
    PLAIN_RAG = "rag"
    LONG_CONTEXT = "long-context"
    DERIVATION = "derivation"


@dataclass(frozen=True)
class FewShotExample:
    hypotheses: tuple[str, ...]
    question: str
    transcript: str


def load_few_shots(path: str | Path | None = None, language: str = "en") -> tuple[FewShotExample, ...]:
    """Load few-shot examples from ``path``, or the bundled set for ``language``.

    File format: ``[{"hypotheses": [str], "question": str, "transcript": str}]``.
    """
    if path is None:
        check_language(language)
        rows = json.loads(read_data(f"{language}/few_shots.json"))
    else:
        rows = json.loads(Path(path).read_text(encoding="utf-8"))
    return tuple(FewShotExample(tuple(r["hypotheses"]), r["question"], r["transcript"]) for r in rows)


def rule_descriptions(language: str = "en") -> dict[Rule, str]:
    check_language(language)
    if language == "en":
        return {r: r.description for r in Rule}
    raw = json.loads(read_data(f"{language}/rules.json"))
    return {parse_rule(name): text for name, text in raw.items()}


@dataclass(frozen=True)
class EngineConfig:
    mode: Mode = Mode.WHOLE
    max_steps: int = DEFAULT_MAX_STEPS
    language: str = "en"
    few_shots: tuple[FewShotExample, ...] | None = None
    temperature: float = 0.0
    whole_template: str | None = None
    one_step_template: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        check_language(self.language)
        if self.max_steps < 1:
            raise InvalidConfig(f"max_steps must be >= 1, got {self.max_steps}")
        if self.few_shots is None:
            object.__setattr__(self, "few_shots", load_few_shots(language=self.language))
        if self.mode is Mode.WHOLE and not self.few_shots:
            raise InvalidConfig("whole-derivation mode needs at least one few-shot example")


# -- transcript grammar ---------------------------------------------------


def parse_step_line(line: str) -> tuple[Rule, tuple[str, ...], str, bool]:
    """Split one transcript line into (rule, args, conclusion, is_final)."""
    fields = [f.strip() for f in line.strip().split("|")]
    if len(fields) != 4:
        raise MalformedLine(f"expected 4 '|'-separated fields, found {len(fields)}: {line.strip()!r}")
    rule_name, args_field, conclusion, marker = fields
    rule = parse_rule(rule_name)
    args = tuple(a.strip() for a in args_field.split(",") if a.strip()) if args_field else ()
    if len(args) != rule.arity:
        raise ArityMismatch(f"{rule} takes {rule.arity} argument(s), got {len(args)}")
    if not conclusion:
        raise EmptyConclusion(f"{rule} step has an empty conclusion")
    norm = marker.lower().rstrip(".").strip()
    if norm in _FINAL_MARKERS:
        is_final = True
    elif norm in _NOT_FINAL_MARKERS:
        is_final = False
    else:
        raise BadFinalityMarker(f"unrecognised finality marker {marker!r}")
    return rule, args, conclusion, is_final


def _is_step_candidate(line: str) -> bool:
    # markdown table rows start with a pipe; step lines start with a rule name
    stripped = line.strip()
    return "|" in stripped and not stripped.startswith("|")


def iter_step_lines(text: str) -> Iterator[tuple[int, tuple[Rule, tuple[str, ...], str, bool]]]:
    """Yield ``(line_no, parsed)`` for each step line in ``text`` (1-based line numbers)."""
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not _is_step_candidate(line):
            continue
        try:
            yield line_no, parse_step_line(line)
        except DerivationError as exc:
            raise type(exc)(str(exc), line_no=line_no) from exc


def _replay(tree: DerivationTree, line_no: int, parsed: tuple) -> None:
    rule, args, conclusion, is_final = parsed
    if tree.status is TreeStatus.FINAL:
        raise StepsAfterFinal("step found after the final answer", line_no=line_no)
    try:
        apply_step(tree, rule, args, conclusion, is_final)
    except DerivationError as exc:
        raise type(exc)(str(exc), line_no=line_no) from exc


def parse_derivation_transcript(text: str, initial_count: int) -> list[DerivationStep]:
    """Parse a whole transcript, checking it against ``initial_count`` initial hypotheses.

    Strict: the last step must be final and nothing may follow it.
    """
    if initial_count < 1:
        raise ValueError("initial_count must be >= 1")
    tree = DerivationTree.start("", [""] * initial_count)
    for line_no, parsed in iter_step_lines(text):
        _replay(tree, line_no, parsed)
    if tree.status is not TreeStatus.FINAL:
        raise MissingFinal(f"transcript has {len(tree.steps)} step(s) and none is final")
    return list(tree.steps)


def format_step_line(step: DerivationStep, language: str = "en") -> str:
    words = _WORDS[language]
    if "|" in step.conclusion or "\n" in step.conclusion:
        raise ValueError("conclusions may not contain '|' or line breaks")
    marker = words["final"] if step.is_final else words["not_final"]
    return f"{step.rule} | {','.join(step.args)} | {step.conclusion} | {marker}"


def format_transcript(steps: Sequence[DerivationStep], language: str = "en") -> str:
    """Serialize steps in the few-shot transcript layout, echoing each new hypothesis."""
    words = _WORDS[language]
    blocks = []
    for step in steps:
        block = format_step_line(step, language)
        if step.out_label is not None:
            block += f"\n\n{words['new_hypothesis']}\n{step.out_label}. {step.conclusion}"
        blocks.append(block)
    return "\n\n".join(blocks)


def normalize_transcript(text: str) -> str:
    """Strip each line and drop blank ones, for whitespace-insensitive comparison."""
    return "\n".join(line.strip() for line in text.splitlines() if line.strip())


# -- prompts --------------------------------------------------------------


def _format_rules(language: str) -> str:
    return "\n".join(f"- {rule}: {text}" for rule, text in rule_descriptions(language).items())


def _format_hypotheses(pairs: Sequence[tuple[str, str]]) -> str:
    return "\n".join(f"{label}. {text}" for label, text in pairs)


def format_few_shot(example: FewShotExample, number: int, language: str = "en") -> str:
    words = _WORDS[language]
    hyps = _format_hypotheses([(str(i), h) for i, h in enumerate(example.hypotheses, start=1)])
    return (
        f"{words['example']} {number}\n\n"
        f"{words['hypotheses']}\n{hyps}\n\n"
        f"{words['question']} {example.question}\n\n"
        f"{example.transcript}"
    )


def build_whole_derivation_prompt(hypotheses: Sequence, query: str, cfg: EngineConfig) -> str:
    """Few-shot prompt asking for a complete transcript.

    ``hypotheses`` may be strings, :class:`~derivare.core.Hypothesis` or
    :class:`~derivare.ingest.Chunk` objects; they are numbered 1..n in order.
    """
    if not hypotheses:
        raise EmptyHypotheses("need at least one hypothesis")
    texts = [h if isinstance(h, str) else h.text for h in hypotheses]
    template = cfg.whole_template or load_template("whole_derivation", cfg.language)
    shots = "\n\n".join(format_few_shot(ex, i, cfg.language) for i, ex in enumerate(cfg.few_shots, start=1))
    return fill_template(
        template,
        rules=_format_rules(cfg.language),
        few_shots=shots,
        hypotheses=_format_hypotheses([(str(i), t) for i, t in enumerate(texts, start=1)]),
        question=query,
    )


def build_one_step_prompt(tree: DerivationTree, cfg: EngineConfig) -> str:
    if tree.status is not TreeStatus.IN_PROGRESS:
        raise TreeAlreadyFinal(f"tree is already {tree.status.value}")
    words = _WORDS[cfg.language]
    template = cfg.one_step_template or load_template("one_step", cfg.language)
    steps = "\n".join(format_step_line(s, cfg.language) for s in tree.steps) or words["no_steps"]
    return fill_template(
        template,
        rules=_format_rules(cfg.language),
        hypotheses=_format_hypotheses([(h.label, h.text) for h in tree.hypotheses]),
        steps=steps,
        question=tree.query,
    )


# -- derivation loop ------------------------------------------------------


def _as_chunk_list(chunks: Sequence) -> list[Chunk]:
    return [getattr(c, "chunk", c) for c in chunks]


def _abort(tree: DerivationTree, exc: Exception) -> DerivationTree:
    reason = f"{type(exc).__name__}: {exc}"
    logger.warning("derivation aborted: %s", reason)
    tree.abort(reason)
    return tree


def run_derivation(query: str, chunks: Sequence, provider: Generator, cfg: EngineConfig | None = None) -> DerivationTree:
    """Build a derivation tree answering ``query`` from ``chunks``.

    ``chunks`` may be :class:`Chunk` or :class:`~derivare.retrieval.ScoredChunk`
    objects.  Parse and provider failures do not raise: the tree comes back
    with status ``ABORTED`` and the error in ``abort_reason``.
    """
    cfg = cfg or EngineConfig()
    chunks = _as_chunk_list(chunks)
    if not chunks:
        raise EmptyHypotheses("need at least one chunk")
    tree = DerivationTree.start(query, [c.text for c in chunks], [c.chunk_id for c in chunks])
    if cfg.mode is Mode.ONE_STEP:
        return _run_one_step(tree, provider, cfg)
    return _run_whole(tree, provider, cfg)


def _first_step_line(text: str) -> str:
    for line in text.splitlines():
        if _is_step_candidate(line):
            return line
    raise MalformedLine(f"no transcript line in model output: {text.strip()[:120]!r}")


def _run_one_step(tree: DerivationTree, provider: Generator, cfg: EngineConfig) -> DerivationTree:
    for _ in range(cfg.max_steps):
        prompt = build_one_step_prompt(tree, cfg)
        try:
            reply = provider.complete(GenerationRequest(prompt, temperature=cfg.temperature))
            rule, args, conclusion, is_final = parse_step_line(_first_step_line(reply))
            apply_step(tree, rule, args, conclusion, is_final)
        except (ProviderError, DerivationError) as exc:
            return _abort(tree, exc)
        if tree.status is TreeStatus.FINAL:
            return tree
    return _abort(tree, StepBudgetExceeded(f"no final answer after {cfg.max_steps} steps"))


def _run_whole(tree: DerivationTree, provider: Generator, cfg: EngineConfig) -> DerivationTree:
    prompt = build_whole_derivation_prompt(list(tree.initial), tree.query, cfg)
    try:
        reply = provider.complete(GenerationRequest(prompt, temperature=cfg.temperature))
    except ProviderError as exc:
        return _abort(tree, exc)
    try:
        for line_no, parsed in iter_step_lines(reply):
            if tree.status is TreeStatus.FINAL:
                # models sometimes keep going with a new example; the answer is already in
                logger.info("ignoring model output after the final answer (line %d)", line_no)
                break
            if len(tree.steps) >= cfg.max_steps:
                raise StepBudgetExceeded(f"transcript exceeds {cfg.max_steps} steps", line_no=line_no)
            _replay(tree, line_no, parsed)
        if tree.status is not TreeStatus.FINAL:
            raise MissingFinal(f"transcript has {len(tree.steps)} step(s) and none is final")
    except DerivationError as exc:
        return _abort(tree, exc)
    return tree


# -- baselines ------------------------------------------------------------


def build_plain_rag_prompt(query: str, chunks: Sequence, language: str = "en") -> str:
    chunks = _as_chunk_list(chunks)
    if not chunks:
        raise EmptyInput("plain RAG needs at least one chunk")
    context = "\n\n".join(f"[{i}] {c.text}" for i, c in enumerate(chunks, start=1))
    return fill_template(load_template("plain_rag", language), context=context, question=query)


def answer_plain_rag(query: str, chunks: Sequence, provider: Generator, *, language: str = "en", temperature: float = 0.0) -> str:
    """Single completion grounded on the retrieved chunks."""
    prompt = build_plain_rag_prompt(query, chunks, language)
    return provider.complete(GenerationRequest(prompt, temperature=temperature)).strip()


def build_long_context_prompt(
    query: str,
    docs: Sequence[Document],
    language: str = "en",
    max_context_chars: int | None = DEFAULT_MAX_CONTEXT_CHARS,
) -> str:
    if not docs:
        raise EmptyInput("long-context answering needs at least one document")
    total = sum(len(d.text) for d in docs)
    if max_context_chars is not None and total > max_context_chars:
        raise ContextOverflow(f"documents total {total} chars, budget is {max_context_chars}")
    documents = "\n\n".join(f"Document: {d.doc_id}\n{d.text}" for d in docs)
    return fill_template(load_template("long_context", language), documents=documents, question=query)


def answer_long_context(
    query: str,
    docs: Sequence[Document],
    provider: Generator,
    *,
    language: str = "en",
    max_context_chars: int | None = DEFAULT_MAX_CONTEXT_CHARS,
    temperature: float = 0.0,
) -> str:
    """Single completion with every full document in the prompt, no retrieval."""
    prompt = build_long_context_prompt(query, docs, language, max_context_chars)
    return provider.complete(GenerationRequest(prompt, temperature=temperature)).strip()
