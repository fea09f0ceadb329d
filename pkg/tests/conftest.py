from __future__ import annotations

import socket
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from derivare.core import DerivationTree, apply_step  # noqa: E402
from derivare.engine import load_few_shots  # noqa: E402

DATA = Path(__file__).parent / "data"

CREDITS_STEPS = [
    ("Extract", ["2"], "A credit is a measure of the dedication required for a subject. It is assumed that if a subject has more credits, it requires more hours of dedication.", False),
    ("Extract", ["2"], "A credit approximately equals one hour of weekly study, throughout an entire semester.", False),
    ("Instantiate", ["b"], "A credit approximately equals one hour of weekly study, throughout an entire semester. Therefore, a subject with 13 credits implies an approximate dedication of 13 hours per week.", False),
    ("Concat", ["a", "c"], "A credit is a measure of the dedication required for a subject. It is assumed that if a subject has more credits, it requires more hours of dedication. A credit approximately equals one hour of weekly study, throughout an entire semester. Therefore, a subject with 13 credits implies an approximate dedication of 13 hours per week.", True),
]


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def credits_example():
    return load_few_shots()[0]


@pytest.fixture
def credits_transcript() -> str:
    return (DATA / "credits_transcript.txt").read_text(encoding="utf-8")


@pytest.fixture
def credits_tree(credits_example) -> DerivationTree:
    tree = DerivationTree.start(credits_example.question, credits_example.hypotheses)
    for rule, args, conclusion, final in CREDITS_STEPS:
        apply_step(tree, rule, args, conclusion, final)
    return tree


@pytest.fixture
def fresh_tree() -> DerivationTree:
    return DerivationTree.start("q?", ["first chunk", "second chunk", "third chunk"])


@pytest.fixture
def no_network(monkeypatch):
    """Make any attempt to open a socket connection fail loudly."""
    attempts = []

    def refuse(*args, **kwargs):
        attempts.append(args)
        raise AssertionError(f"network access attempted: {args!r}")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket.socket, "connect_ex", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)
    return attempts


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.report_lines():
        terminalreporter.write_line(line)
