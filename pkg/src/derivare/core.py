"""Derivation trees built from retrieved chunks by applying natural-language rules.

A tree starts from a query and a handful of initial hypotheses (the retrieved
chunks, labelled ``"1"``..``"n"``).  Each rule application consumes existing
hypotheses and produces a conclusion; non-final conclusions become new
hypotheses labelled ``"a"``, ``"b"``, ... and the final one answers the query.

:func:`apply_step` is the only way to grow a tree.  Once a tree is final or
aborted its fields are tuples and it is never touched again.
"""

from __future__ import annotations

import json
import re
import textwrap
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .errors import (
    ArityMismatch,
    EmptyConclusion,
    ForwardReference,
    TreeAlreadyFinal,
    UnknownLabel,
    UnknownRule,
)

__all__ = [
    "Rule",
    "RULE_DESCRIPTIONS",
    "parse_rule",
    "Hypothesis",
    "DerivationStep",
    "TreeStatus",
    "DerivationTree",
    "Violation",
    "next_label",
    "label_index",
    "apply_step",
    "validate_tree",
    "is_valid",
    "render_tree",
    "tree_to_dict",
    "tree_from_dict",
    "parse_tree_json",
]

CONCLUSION = "CONCLUSION"

_DERIVED_LABEL = re.compile(r"^[a-z]+$")


class Rule(str, Enum):
    EXTRACT = "Extract"
    CONCAT = "Concat"
    INSTANTIATE = "Instantiate"
    COMPOSE = "Compose"
    REFINE = "Refine"
    NOINFO = "NoInfo"

    @property
    def arity(self) -> int:
        return _ARITY[self]

    @property
    def description(self) -> str:
        return RULE_DESCRIPTIONS[self]

    def __str__(self) -> str:
        return self.value


_ARITY = {
    Rule.EXTRACT: 1,
    Rule.CONCAT: 2,
    Rule.INSTANTIATE: 1,
    Rule.COMPOSE: 2,
    Rule.REFINE: 1,
    Rule.NOINFO: 0,
}

RULE_DESCRIPTIONS = {
    Rule.EXTRACT: "Given a hypothesis h, this rule extracts a specific part of h as a conclusion.",
    Rule.CONCAT: "Combines two independent hypotheses to generate the conclusion.",
    Rule.INSTANTIATE: "Generates a conclusion by instantiating a generic hypothesis into a particular case.",
    Rule.COMPOSE: "Combines two hypotheses that share a common element to generate a new conclusion.",
    Rule.REFINE: (
        "Given a hypothesis h, it slightly adapts it to better fit the question, "
        "without modifying the semantics or content of h."
    ),
    Rule.NOINFO: (
        "This rule is used when none of the hypotheses provide information to answer "
        "the question (or part of the question)."
    ),
}

_RULES_BY_NAME = {r.value.lower(): r for r in Rule}


def parse_rule(name: str | Rule) -> Rule:
    """Resolve a rule name case-insensitively, ignoring surrounding whitespace."""
    if isinstance(name, Rule):
        return name
    try:
        return _RULES_BY_NAME[str(name).strip().lower()]
    except KeyError:
        raise UnknownRule(f"unknown rule {str(name).strip()!r}") from None


@dataclass(frozen=True)
class Hypothesis:
    """A labelled statement available as a rule argument.

    Initial hypotheses point at the chunk they came from; derived ones point at
    the index of the step that produced them.
    """

    label: str
    text: str
    chunk_id: str | None = None
    step_index: int | None = None

    @property
    def is_initial(self) -> bool:
        return self.step_index is None


@dataclass(frozen=True)
class DerivationStep:
    rule: Rule
    args: tuple[str, ...]
    conclusion: str
    is_final: bool
    out_label: str | None = None


class TreeStatus(str, Enum):
    IN_PROGRESS = "in_progress"
    FINAL = "final"
    ABORTED = "aborted"


@dataclass
class DerivationTree:
    query: str
    initial: tuple[Hypothesis, ...]
    steps: tuple[DerivationStep, ...] = ()
    status: TreeStatus = TreeStatus.IN_PROGRESS
    abort_reason: str | None = None

    @classmethod
    def start(
        cls,
        query: str,
        texts: Sequence[str],
        chunk_ids: Sequence[str] | None = None,
    ) -> DerivationTree:
        """Open a tree whose initial hypotheses are ``texts`` labelled 1..n."""
        if chunk_ids is None:
            chunk_ids = [f"hypothesis-{i}" for i in range(1, len(texts) + 1)]
        if len(chunk_ids) != len(texts):
            raise ValueError("texts and chunk_ids differ in length")
        initial = tuple(
            Hypothesis(str(i), text, chunk_id=cid)
            for i, (text, cid) in enumerate(zip(texts, chunk_ids), start=1)
        )
        return cls(query=query, initial=initial)

    @property
    def derived(self) -> tuple[Hypothesis, ...]:
        return tuple(
            Hypothesis(s.out_label, s.conclusion, step_index=i)
            for i, s in enumerate(self.steps)
            if s.out_label is not None
        )

    @property
    def hypotheses(self) -> tuple[Hypothesis, ...]:
        return self.initial + self.derived

    @property
    def labels(self) -> set[str]:
        return {h.label for h in self.hypotheses}

    def lookup(self, label: str) -> Hypothesis:
        for h in self.hypotheses:
            if h.label == label:
                return h
        raise UnknownLabel(f"no hypothesis labelled {label!r}")

    @property
    def answer(self) -> str | None:
        """The final conclusion, or ``None`` while the tree is not final."""
        if self.status is TreeStatus.FINAL:
            return self.steps[-1].conclusion
        return None

    def abort(self, reason: str) -> None:
        if self.status is not TreeStatus.IN_PROGRESS:
            raise TreeAlreadyFinal(f"cannot abort a tree that is {self.status.value}")
        self.status = TreeStatus.ABORTED
        self.abort_reason = reason


def next_label(initial_count: int, derived_count: int) -> str:
    """Label for the next derived hypothesis: a..z, aa..az, ba.. (bijective base 26).

    Initial hypotheses use the decimal labels 1..initial_count, which never
    collide with these, so ``initial_count`` only takes part in the argument check.
    """
    if initial_count < 0 or derived_count < 0:
        raise ValueError("counts must be non-negative")
    n = derived_count + 1
    out = []
    while n > 0:
        n, rem = divmod(n - 1, 26)
        out.append(chr(ord("a") + rem))
    return "".join(reversed(out))


def label_index(label: str) -> int:
    """Inverse of :func:`next_label` for derived labels ("a" -> 0)."""
    if not _DERIVED_LABEL.match(label):
        raise ValueError(f"{label!r} is not a derived label")
    n = 0
    for ch in label:
        n = n * 26 + (ord(ch) - ord("a") + 1)
    return n - 1


def _check_args(tree: DerivationTree, args: Sequence[str]) -> None:
    known = tree.labels
    for arg in args:
        if arg in known:
            continue
        if _DERIVED_LABEL.match(arg):
            raise ForwardReference(f"label {arg!r} used before it was derived")
        raise UnknownLabel(f"label {arg!r} does not exist in this tree")


def apply_step(
    tree: DerivationTree,
    rule: Rule | str,
    args: Iterable[str],
    conclusion: str,
    is_final: bool,
) -> str | None:
    """Apply one rule to ``tree`` in place.

    Returns the label given to the new hypothesis, or ``None`` when the step is
    final (the tree is then closed).
    """
    if tree.status is not TreeStatus.IN_PROGRESS:
        raise TreeAlreadyFinal(f"tree is already {tree.status.value}")
    rule = parse_rule(rule)
    args = tuple(str(a).strip() for a in args)
    if len(args) != rule.arity:
        raise ArityMismatch(f"{rule} takes {rule.arity} argument(s), got {len(args)}")
    _check_args(tree, args)
    if not conclusion or not conclusion.strip():
        raise EmptyConclusion(f"{rule} step has an empty conclusion")

    out_label = None
    if not is_final:
        out_label = next_label(len(tree.initial), len(tree.derived))
    tree.steps = tree.steps + (DerivationStep(rule, args, conclusion, bool(is_final), out_label),)
    if is_final:
        tree.status = TreeStatus.FINAL
    return out_label


# -- validation -----------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    step_index: int | None = None


def validate_tree(tree: DerivationTree) -> list[Violation]:
    """Every structural problem with ``tree``; an empty list means it is sound."""
    out: list[Violation] = []

    seen: set[str] = set()
    for i, h in enumerate(tree.initial, start=1):
        if h.label != str(i):
            out.append(Violation("bad initial label", f"initial hypothesis {i} is labelled {h.label!r}"))
        if not h.chunk_id:
            out.append(Violation("missing chunk id", f"initial hypothesis {h.label!r} has no chunk id"))
        if h.label in seen:
            out.append(Violation("duplicate label", f"label {h.label!r} appears twice"))
        seen.add(h.label)

    created_later = {s.out_label: i for i, s in enumerate(tree.steps) if s.out_label}
    derived = 0
    last = len(tree.steps) - 1
    for i, step in enumerate(tree.steps):
        if not isinstance(step.rule, Rule):
            out.append(Violation("unknown rule", f"step {i} uses rule {step.rule!r}", i))
        elif len(step.args) != step.rule.arity:
            out.append(
                Violation(
                    "arity mismatch",
                    f"step {i}: {step.rule} takes {step.rule.arity} argument(s), got {len(step.args)}",
                    i,
                )
            )
        for arg in step.args:
            if arg in seen:
                continue
            if arg in created_later:
                out.append(Violation("forward reference", f"step {i} uses {arg!r} before it is derived", i))
            else:
                out.append(Violation("unknown label", f"step {i} uses unknown label {arg!r}", i))
        if not step.conclusion.strip():
            out.append(Violation("empty conclusion", f"step {i} has an empty conclusion", i))

        if step.is_final:
            if step.out_label is not None:
                out.append(Violation("final step labelled", f"final step {i} carries label {step.out_label!r}", i))
            if i != last:
                out.append(Violation("final step not last", f"step {i} is final but {last - i} step(s) follow", i))
        else:
            expected = next_label(len(tree.initial), derived)
            if step.out_label != expected:
                out.append(
                    Violation("label out of sequence", f"step {i} is labelled {step.out_label!r}, expected {expected!r}", i)
                )
            if step.out_label in seen:
                out.append(Violation("duplicate label", f"label {step.out_label!r} appears twice", i))
            if step.out_label:
                seen.add(step.out_label)
            derived += 1

    ends_final = bool(tree.steps) and tree.steps[-1].is_final
    if (tree.status is TreeStatus.FINAL) != ends_final:
        out.append(
            Violation(
                "status mismatch",
                f"status is {tree.status.value} but the last step is "
                f"{'final' if ends_final else 'not final'}",
            )
        )
    return out


def validation_notes(tree: DerivationTree) -> list[Violation]:
    """Informational remarks that are not violations.

    Currently one kind: a final step that builds on a NoInfo conclusion, i.e.
    an answer that is explicitly partial.
    """
    noinfo = {s.out_label for s in tree.steps if s.rule is Rule.NOINFO and s.out_label}
    notes = []
    for i, step in enumerate(tree.steps):
        if step.is_final and noinfo.intersection(step.args):
            notes.append(
                Violation("final uses noinfo", f"final step {i} combines a NoInfo conclusion with other material", i)
            )
    return notes


def is_valid(tree: DerivationTree) -> bool:
    return not validate_tree(tree)


# -- serialization --------------------------------------------------------


def tree_to_dict(tree: DerivationTree) -> dict:
    out = {
        "query": tree.query,
        "initial": [{"label": h.label, "text": h.text, "chunk_id": h.chunk_id} for h in tree.initial],
        "steps": [
            {
                "rule": s.rule.value,
                "args": list(s.args),
                "conclusion": s.conclusion,
                "is_final": s.is_final,
                "out_label": s.out_label,
            }
            for s in tree.steps
        ],
        "status": tree.status.value,
    }
    if tree.abort_reason is not None:
        out["abort_reason"] = tree.abort_reason
    return out


def tree_from_dict(data: dict) -> DerivationTree:
    return DerivationTree(
        query=data["query"],
        initial=tuple(Hypothesis(h["label"], h["text"], chunk_id=h.get("chunk_id")) for h in data["initial"]),
        steps=tuple(
            DerivationStep(
                parse_rule(s["rule"]),
                tuple(s["args"]),
                s["conclusion"],
                bool(s["is_final"]),
                s.get("out_label"),
            )
            for s in data["steps"]
        ),
        status=TreeStatus(data["status"]),
        abort_reason=data.get("abort_reason"),
    )


def parse_tree_json(text: str) -> DerivationTree:
    return tree_from_dict(json.loads(text))


# -- rendering ------------------------------------------------------------


def _short(text: str, width: int) -> str:
    return textwrap.shorten(" ".join(text.split()), width=width, placeholder="...") or '""'


def _render_ascii(tree: DerivationTree, width: int) -> str:
    producer = {s.out_label: s for s in tree.steps if s.out_label}
    initial = {h.label: h for h in tree.initial}
    used = {a for s in tree.steps for a in s.args}
    expanded: set[str] = set()
    lines = [f"Question: {_short(tree.query, width)}"]

    def node(label: str, prefix: str, tail: str) -> None:
        if label in initial:
            h = initial[label]
            lines.append(f"{prefix}{label} (chunk {h.chunk_id}) {_short(h.text, width)}")
            return
        if label in expanded:
            lines.append(f"{prefix}{label} (see above)")
            return
        expanded.add(label)
        step = producer[label]
        lines.append(f"{prefix}{label} [{step.rule}] {_short(step.conclusion, width)}")
        children(step, tail)

    def children(step: DerivationStep, indent: str) -> None:
        for j, arg in enumerate(step.args):
            last = j == len(step.args) - 1
            node(arg, indent + ("`-- " if last else "|-- "), indent + ("    " if last else "|   "))

    if tree.steps and tree.steps[-1].is_final:
        final = tree.steps[-1]
        lines.append(f"{CONCLUSION} [{final.rule}] {_short(final.conclusion, width)}")
        children(final, "")
    for s in tree.steps:
        if s.out_label and s.out_label not in used:
            node(s.out_label, "", "")
    if tree.status is TreeStatus.ABORTED:
        lines.append(f"(aborted: {tree.abort_reason})")
    return "\n".join(lines)


def _dot_id(label: str) -> str:
    return '"' + label.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _render_dot(tree: DerivationTree) -> str:
    lines = ["digraph derivation {", "  rankdir=BT;"]
    for h in tree.initial:
        lines.append(f"  {_dot_id(h.label)} [shape=box];")
    for s in tree.steps:
        target = s.out_label or CONCLUSION
        shape = "doubleoctagon" if s.out_label is None else "ellipse"
        lines.append(f"  {_dot_id(target)} [shape={shape}, label={_dot_id(f'{target}: {s.rule}')}];")
        for arg in s.args:
            lines.append(f"  {_dot_id(arg)} -> {_dot_id(target)};")
    lines.append("}")
    return "\n".join(lines)


def render_tree(tree: DerivationTree, format: str = "ascii", *, width: int = 80) -> str:
    """Render ``tree`` as ``"ascii"``, ``"dot"`` (Graphviz) or canonical ``"json"``."""
    if format == "ascii":
        return _render_ascii(tree, width)
    if format == "dot":
        return _render_dot(tree)
    if format == "json":
        return json.dumps(tree_to_dict(tree), ensure_ascii=False, indent=2)
    raise ValueError(f"unknown render format {format!r}")
