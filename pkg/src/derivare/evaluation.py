"""LLM-as-judge scoring of answers against reference answers.

The judge gets a four-part prompt (question, candidate response, reference
answer, score rubric) and replies with free feedback followed by
``[RESULT] n`` where ``n`` is 1..5.  Scores 1-2 are unacceptable, 3-5
acceptable.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .core import DerivationTree
from .engine import GenerationStrategy
from .errors import (
    AllRecordsFailed,
    DerivareError,
    EmptyInput,
    MissingReference,
    NoResultMarker,
    ScoreOutOfRange,
)
from .provider import GenerationRequest, Generator
from .templates import fill_template, read_data

logger = logging.getLogger(__name__)

SCORES = (1, 2, 3, 4, 5)
ACCEPTABLE = "Acceptable"
UNACCEPTABLE = "Unacceptable"

DEFAULT_CRITERIA = (
    "Is the candidate answer correct and truthful when compared with the reference answer? "
    "Penalize false or contradictory information; do not penalize an answer for declining "
    "to answer when it gives no information."
)

DEFAULT_SCORE_DESCRIPTIONS = {
    1: "Candidate contradicts reference; false information.",
    2: "Candidate has conflicts with reference; partially false information.",
    3: "Candidate does not contradict reference but does not provide any information either.",
    4: "Candidate partially matches reference; correct but incomplete information.",
    5: "Candidate completely matches reference; correct and complete information.",
}

RESULT_MARKER = "[RESULT]"

# section headings of the bundled judge template, in prompt order
JUDGE_COMPONENTS = (
    "Instruction to evaluate",
    "Response to Evaluate",
    "Reference Answer",
    "Customized Score Rubric",
)


@dataclass(frozen=True)
class QaRecord:
    question: str
    reference_answer: str
    candidate_answer: str = ""
    strategy: GenerationStrategy | None = None
    derivation: DerivationTree | None = None


@dataclass(frozen=True)
class ScoreRubric:
    criteria: str = DEFAULT_CRITERIA
    per_score: dict[int, str] = field(default_factory=lambda: dict(DEFAULT_SCORE_DESCRIPTIONS))

    def __post_init__(self) -> None:
        missing = [s for s in SCORES if not self.per_score.get(s)]
        if missing:
            raise ValueError(f"rubric lacks descriptions for scores {missing}")

    @classmethod
    def from_json(cls, path: str | Path) -> ScoreRubric:
        """Load ``{"criteria": str, "per_score": {"1": str, ..., "5": str}}``."""
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            criteria=raw.get("criteria", DEFAULT_CRITERIA),
            per_score={int(k): v for k, v in raw["per_score"].items()},
        )

    def render(self) -> str:
        lines = [f"[{self.criteria}]"]
        lines.extend(f"Score {s}: {self.per_score[s]}" for s in SCORES)
        return "\n".join(lines)


@dataclass(frozen=True)
class JudgeVerdict:
    score: int
    feedback: str
    classification: str


@dataclass(frozen=True)
class EvalSummary:
    n: int
    counts: dict[int, int]
    pct_acceptable: float
    average: float
    std_dev: float
    excluded: int = 0

    @property
    def pct_unacceptable(self) -> float:
        return round(100.0 * (self.counts[1] + self.counts[2]) / self.n, 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["counts"] = {str(k): v for k, v in self.counts.items()}
        return d


def classify_score(score: int) -> str:
    if score not in SCORES:
        raise ScoreOutOfRange(f"score must be 1..5, got {score}")
    return UNACCEPTABLE if score <= 2 else ACCEPTABLE


def build_judge_prompt(record: QaRecord, rubric: ScoreRubric | None = None, template: str | None = None) -> str:
    if not record.reference_answer or not record.reference_answer.strip():
        raise MissingReference(f"record {record.question[:60]!r} has no reference answer")
    if not record.question.strip():
        raise ValueError("record has an empty question")
    rubric = rubric or ScoreRubric()
    return fill_template(
        template or read_data("judge.txt"),
        instruction=record.question,
        response=record.candidate_answer,
        reference=record.reference_answer,
        rubric=rubric.render(),
    )


_RESULT = re.compile(r"\[RESULT\]\s*\(?\s*(-?\d+)")
_FEEDBACK_PREFIX = re.compile(r"^\s*feedback\s*:\s*", re.IGNORECASE)


def parse_judge_output(text: str) -> JudgeVerdict:
    """Read the last ``[RESULT] n`` marker; everything before it is feedback."""
    matches = list(_RESULT.finditer(text))
    if not matches:
        raise NoResultMarker(f"no {RESULT_MARKER} marker in judge output: {text.strip()[:120]!r}")
    last = matches[-1]
    score = int(last.group(1))
    classification = classify_score(score)
    feedback = _FEEDBACK_PREFIX.sub("", text[: last.start()]).strip()
    return JudgeVerdict(score=score, feedback=feedback, classification=classification)


def aggregate(verdicts: Sequence[JudgeVerdict | int], *, ddof: int = 1, excluded: int = 0) -> EvalSummary:
    """Score distribution, % acceptable, mean and standard deviation.

    ``ddof=1`` (the default) gives the sample standard deviation, which is what
    the published per-experiment tables report; ``ddof=0`` gives the
    population value.  Plain integer scores are accepted as well as verdicts.
    """
    if not verdicts:
        raise EmptyInput("aggregate() needs at least one verdict")
    scores = [v if isinstance(v, int) else v.score for v in verdicts]
    for s in scores:
        classify_score(s)
    tally = Counter(scores)
    counts = {s: tally.get(s, 0) for s in SCORES}
    n = len(scores)
    mean = sum(s * c for s, c in counts.items()) / n
    sq = sum(c * (s - mean) ** 2 for s, c in counts.items())
    std = math.sqrt(sq / (n - ddof)) if n > ddof else 0.0
    pct = round(100.0 * (counts[3] + counts[4] + counts[5]) / n, 1)
    return EvalSummary(n=n, counts=counts, pct_acceptable=pct, average=mean, std_dev=std, excluded=excluded)


def summary_from_counts(counts: Sequence[int], *, ddof: int = 1) -> EvalSummary:
    """Aggregate a count vector ``(#1, #2, #3, #4, #5)``."""
    if len(counts) != 5:
        raise ValueError("need exactly five counts")
    return aggregate([s for s, c in zip(SCORES, counts) for _ in range(c)], ddof=ddof)


def judge_record(record: QaRecord, judge: Generator, rubric: ScoreRubric | None = None) -> JudgeVerdict:
    prompt = build_judge_prompt(record, rubric)
    return parse_judge_output(judge.complete(GenerationRequest(prompt)))


def run_eval(
    dataset: Sequence[QaRecord],
    judge: Generator,
    rubric: ScoreRubric | None = None,
    *,
    parallelism: int = 4,
    ddof: int = 1,
    out_dir: str | Path | None = None,
) -> tuple[list[JudgeVerdict | None], EvalSummary]:
    """Judge every record and summarise.

    The verdict list is aligned with ``dataset``; records the judge failed on
    hold ``None`` and are counted in ``summary.excluded`` rather than scored.
    With ``out_dir``, ``verdicts.jsonl`` and ``summary.json`` are written there.
    """
    if not dataset:
        raise EmptyInput("run_eval() needs at least one record")
    rubric = rubric or ScoreRubric()

    def one(record: QaRecord) -> tuple[JudgeVerdict | None, str | None]:
        try:
            return judge_record(record, judge, rubric), None
        except DerivareError as exc:
            logger.warning("judge failed on %r: %s", record.question[:60], exc)
            return None, f"{type(exc).__name__}: {exc}"

    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        results = list(pool.map(one, dataset))

    verdicts = [v for v, _ in results]
    ok = [v for v in verdicts if v is not None]
    if not ok:
        raise AllRecordsFailed(f"judge failed on all {len(dataset)} record(s); first error: {results[0][1]}")
    summary = aggregate(ok, ddof=ddof, excluded=len(verdicts) - len(ok))

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_verdicts(out / "verdicts.jsonl", dataset, results)
        write_summary(out / "summary.json", summary)
    return verdicts, summary


# -- file formats ---------------------------------------------------------


def read_dataset(path: str | Path, strategy: GenerationStrategy | None = None) -> list[QaRecord]:
    """Read ``{"question", "reference_answer"[, "candidate_answer"]}`` JSONL rows."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            row = json.loads(line)
            question = row.get("question", "")
            reference = row.get("reference_answer", "")
            if not question.strip():
                raise ValueError(f"{path}:{line_no}: empty question")
            if not reference.strip():
                raise MissingReference(f"{path}:{line_no}: empty reference_answer")
            records.append(QaRecord(question, reference, row.get("candidate_answer", ""), strategy))
    if not records:
        raise EmptyInput(f"{path}: dataset has no records")
    return records


def write_verdicts(
    path: str | Path,
    dataset: Sequence[QaRecord],
    results: Sequence[tuple[JudgeVerdict | None, str | None]],
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record, (verdict, error) in zip(dataset, results):
            row = {
                "question": record.question,
                "strategy": record.strategy.value if record.strategy else None,
                "score": verdict.score if verdict else None,
                "classification": verdict.classification if verdict else None,
                "feedback": verdict.feedback if verdict else "",
            }
            if error:
                row["error"] = error
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def write_summary(path: str | Path, summary: EvalSummary) -> None:
    Path(path).write_text(json.dumps(summary.to_dict(), indent=2) + "\n", encoding="utf-8")
