import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from derivare.core import DerivationTree, Rule, TreeStatus, apply_step, validate_tree
from derivare.engine import (
    EngineConfig,
    FewShotExample,
    Mode,
    answer_long_context,
    answer_plain_rag,
    build_one_step_prompt,
    build_whole_derivation_prompt,
    format_few_shot,
    format_transcript,
    load_few_shots,
    normalize_transcript,
    parse_derivation_transcript,
    parse_step_line,
    run_derivation,
)
from derivare.errors import (
    ArityMismatch,
    BadFinalityMarker,
    ContextOverflow,
    EmptyConclusion,
    EmptyHypotheses,
    EmptyInput,
    ForwardReference,
    InvalidConfig,
    MalformedLine,
    MissingFinal,
    StepBudgetExceeded,
    StepsAfterFinal,
    TreeAlreadyFinal,
    UnknownRule,
)
from derivare.ingest import Chunk, Document
from derivare.provider import MockProvider
from derivare.retrieval import ScoredChunk
from oracles import random_valid_sequence
from scenarios import SCENARIOS, run_one_step, run_whole, structure

HYPS = ["first fragment", "second fragment", "third fragment"]


class TestFewShots:
    @pytest.mark.parametrize("language", ["en", "es"])
    def test_bundled_examples_parse(self, language):
        shots = load_few_shots(language=language)
        assert len(shots) == 6
        for ex in shots:
            steps = parse_derivation_transcript(ex.transcript, len(ex.hypotheses))
            assert steps[-1].is_final

    def test_credits_first(self, credits_example):
        rules = [s.rule for s in parse_derivation_transcript(credits_example.transcript, 3)]
        assert rules == [Rule.EXTRACT, Rule.EXTRACT, Rule.INSTANTIATE, Rule.CONCAT]

    def test_covers_every_rule(self):
        used = {s.rule for ex in load_few_shots() for s in parse_derivation_transcript(ex.transcript, len(ex.hypotheses))}
        assert used == set(Rule)


class TestConfig:
    def test_defaults(self):
        cfg = EngineConfig()
        assert cfg.max_steps == 12 and cfg.mode is Mode.WHOLE and cfg.language == "en"

    def test_bad_steps(self):
        with pytest.raises(InvalidConfig):
            EngineConfig(max_steps=0)

    def test_whole_needs_shots(self):
        with pytest.raises(InvalidConfig):
            EngineConfig(few_shots=())
        EngineConfig(mode="one-step", few_shots=())

    def test_language(self):
        with pytest.raises(InvalidConfig):
            EngineConfig(language="fr")


class TestWholePrompt:
    def test_contents(self):
        cfg = EngineConfig()
        prompt = build_whole_derivation_prompt(HYPS, "What?", cfg)
        for ex in cfg.few_shots:
            assert ex.transcript in prompt
        for rule in Rule:
            assert rule.description in prompt
        assert "1. first fragment\n2. second fragment\n3. third fragment" in prompt
        assert "User question:" in prompt
        assert prompt.rstrip().endswith("User question: What?")

    def test_deterministic(self):
        cfg = EngineConfig()
        assert build_whole_derivation_prompt(HYPS, "q", cfg) == build_whole_derivation_prompt(HYPS, "q", EngineConfig())

    def test_empty(self):
        with pytest.raises(EmptyHypotheses):
            build_whole_derivation_prompt([], "q", EngineConfig())

    def test_custom_few_shot(self):
        ex = FewShotExample(("h",), "Q?", "NoInfo |  | Nothing. | Final answer")
        prompt = build_whole_derivation_prompt(HYPS, "q", EngineConfig(few_shots=(ex,)))
        assert "Example 1" in prompt and "Example 2" not in prompt

    def test_spanish(self):
        cfg = EngineConfig(language="es")
        prompt = build_whole_derivation_prompt(HYPS, "¿Qué?", cfg)
        assert prompt.rstrip().endswith("Pregunta del usuario: ¿Qué?")
        assert "Hipótesis:" in prompt
        for ex in cfg.few_shots:
            assert ex.transcript in prompt


class TestOneStepPrompt:
    def labels(self, prompt):
        section = prompt.split("Hypotheses:\n", 1)[1].split("\n\n", 1)[0]
        return [line.split(".", 1)[0] for line in section.splitlines()]

    def test_fresh(self, fresh_tree):
        prompt = build_one_step_prompt(fresh_tree, EngineConfig(mode="one-step"))
        assert self.labels(prompt) == ["1", "2", "3"]
        assert "q?" in prompt
        assert "rule | arguments | conclusion | finality" in prompt

    def test_with_derived(self, fresh_tree):
        apply_step(fresh_tree, "Extract", ["1"], "part of first", False)
        prompt = build_one_step_prompt(fresh_tree, EngineConfig(mode="one-step"))
        assert self.labels(prompt) == ["1", "2", "3", "a"]
        assert "Extract | 1 | part of first | Not a final answer" in prompt

    def test_final(self, credits_tree):
        with pytest.raises(TreeAlreadyFinal):
            build_one_step_prompt(credits_tree, EngineConfig())


class TestParseStepLine:
    def test_credits_extract(self):
        line = (
            "Extract | 2 | A credit is a measure of the dedication required for a subject. It is assumed that if a "
            "subject has more credits, it requires more hours of dedication. | Not a final answer"
        )
        rule, args, conclusion, final = parse_step_line(line)
        assert (rule, args, final) == (Rule.EXTRACT, ("2",), False)
        assert conclusion.startswith("A credit is a measure") and conclusion.endswith("hours of dedication.")

    def test_credits_concat(self):
        rule, args, _, final = parse_step_line("Concat | a,c | A credit is a measure ... 13 hours per week. | Final answer")
        assert (rule, args, final) == (Rule.CONCAT, ("a", "c"), True)

    def test_lenient(self):
        assert parse_step_line("  concat |a , c|  x  | final answer. ") == (Rule.CONCAT, ("a", "c"), "x", True)
        assert parse_step_line("Refine | a | x | NOT A FINAL ANSWER")[3] is False
        assert parse_step_line("NoInfo |  | nada | Respuesta final")[3] is True

    @pytest.mark.parametrize(
        "line, exc",
        [
            ("Foo | 1 | x | Final answer", UnknownRule),
            ("Extract | 1 | x", MalformedLine),
            ("Extract | 1 | x | y | Final answer", MalformedLine),
            ("Extract | 1 |  | Final answer", EmptyConclusion),
            ("Extract | 1 | x | maybe", BadFinalityMarker),
            ("Extract |  | x | Final answer", ArityMismatch),
            ("NoInfo | 1 | x | Final answer", ArityMismatch),
        ],
    )
    def test_errors(self, line, exc):
        with pytest.raises(exc):
            parse_step_line(line)


class TestTranscript:
    def test_credits(self, credits_transcript):
        steps = parse_derivation_transcript(credits_transcript, 3)
        assert [s.rule for s in steps] == [Rule.EXTRACT, Rule.EXTRACT, Rule.INSTANTIATE, Rule.CONCAT]
        assert steps[-1].args == ("a", "c") and steps[-1].is_final

    def test_missing_final(self):
        with pytest.raises(MissingFinal):
            parse_derivation_transcript("Extract | 1 | x | Not a final answer", 3)

    def test_forward_reference(self):
        with pytest.raises(ForwardReference) as info:
            parse_derivation_transcript("\nExtract | b | x | Final answer", 3)
        assert info.value.line_no == 2
        assert str(info.value).startswith("line 2: ")

    def test_steps_after_final(self):
        text = "Extract | 1 | x | Final answer\nExtract | 2 | y | Final answer"
        with pytest.raises(StepsAfterFinal) as info:
            parse_derivation_transcript(text, 3)
        assert info.value.line_no == 2

    def test_line_number_on_grammar_error(self):
        with pytest.raises(UnknownRule) as info:
            parse_derivation_transcript("User question: q\n\nGuess | 1 | x | Final answer", 3)
        assert info.value.line_no == 3

    def test_skips_markdown_table_rows(self):
        text = "| a | b | c | d |\nExtract | 1 | x | Final answer"
        assert len(parse_derivation_transcript(text, 1)) == 1

    def test_format_reproduces_credits(self, credits_example):
        steps = parse_derivation_transcript(credits_example.transcript, 3)
        assert normalize_transcript(format_transcript(steps)) == normalize_transcript(credits_example.transcript)

    def test_bundled_file_matches_few_shot(self, credits_example, credits_transcript):
        body = format_few_shot(credits_example, 1).split("\n\n", 1)[1]
        assert normalize_transcript(body) == normalize_transcript(credits_transcript)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from(["en", "es"]))
    def test_round_trip_property(self, seed, language):
        n_initial, raw = random_valid_sequence(random.Random(seed), finish=True)
        tree = DerivationTree.start("q", ["h"] * n_initial)
        for rule, args, conclusion, final in raw:
            apply_step(tree, rule, args, conclusion, final)
        text = format_transcript(tree.steps, language)
        assert parse_derivation_transcript(text, n_initial) == list(tree.steps)


class TestRunDerivation:
    def test_whole_credits(self, credits_example):
        mock = MockProvider([("User question:", credits_example.transcript)])
        tree = run_derivation(credits_example.question, [Chunk(f"d#{i}", "d", h, 0) for i, h in enumerate(credits_example.hypotheses)], mock)
        assert tree.status is TreeStatus.FINAL
        assert tree.answer.startswith("A credit is a measure") and tree.answer.endswith("13 hours per week.")
        assert validate_tree(tree) == []
        assert [h.chunk_id for h in tree.initial] == ["d#0", "d#1", "d#2"]
        assert len(mock.call_log) == 1

    @pytest.mark.parametrize("scenario", SCENARIOS, ids=lambda s: s.name)
    def test_modes_equivalent(self, scenario):
        one, one_mock = run_one_step(scenario)
        whole, whole_mock = run_whole(scenario)
        assert structure(one) == structure(whole)
        assert one.status is scenario.expect_status
        assert len(one_mock.call_log) == scenario.expected_calls_one_step
        assert len(whole_mock.call_log) == 1
        assert validate_tree(one) == [] and validate_tree(whole) == []

    def test_budget(self):
        mock = MockProvider([("*", "Extract | 1 | again | Not a final answer")] * 20)
        tree = run_derivation("q", [Chunk("d#0", "d", "x", 0)], mock, EngineConfig(mode="one-step", max_steps=5))
        assert tree.status is TreeStatus.ABORTED
        assert tree.abort_reason.startswith(StepBudgetExceeded.__name__)
        assert len(mock.call_log) == 5 and len(tree.steps) == 5

    def test_accepts_scored_chunks(self):
        mock = MockProvider([("*", "NoInfo |  | Nothing. | Final answer")])
        tree = run_derivation("q", [ScoredChunk(Chunk("d#0", "d", "x", 0), 0.5)], mock, EngineConfig(mode="one-step"))
        assert tree.answer == "Nothing." and tree.initial[0].chunk_id == "d#0"

    def test_whole_parse_error_aborts(self):
        mock = MockProvider([("*", "Extract | 1 | x | Not a final answer\nExtract | q | y | Final answer")])
        tree = run_derivation("q", [Chunk("d#0", "d", "x", 0)], mock)
        assert tree.status is TreeStatus.ABORTED
        assert "line 2" in tree.abort_reason
        assert len(tree.steps) == 1

    def test_whole_missing_final_aborts(self):
        mock = MockProvider([("*", "I do not know.")])
        tree = run_derivation("q", [Chunk("d#0", "d", "x", 0)], mock)
        assert tree.abort_reason.startswith("MissingFinal")

    def test_whole_ignores_trailing_output(self):
        mock = MockProvider([("*", "NoInfo |  | Nothing. | Final answer\n\nExample 7\nExtract | 1 | x | Final answer")])
        tree = run_derivation("q", [Chunk("d#0", "d", "x", 0)], mock)
        assert tree.status is TreeStatus.FINAL and len(tree.steps) == 1

    def test_one_step_uses_first_step_line(self):
        mock = MockProvider([("*", "Sure, here is the step:\nNoInfo |  | Nothing. | Final answer\nExtract | 1 | x | Final answer")])
        tree = run_derivation("q", [Chunk("d#0", "d", "x", 0)], mock, EngineConfig(mode="one-step"))
        assert [s.rule for s in tree.steps] == [Rule.NOINFO]

    def test_provider_error_aborts(self):
        tree = run_derivation("q", [Chunk("d#0", "d", "x", 0)], MockProvider([]), EngineConfig(mode="one-step"))
        assert tree.abort_reason.startswith("ScriptExhausted")

    def test_empty_chunks(self):
        with pytest.raises(EmptyHypotheses):
            run_derivation("q", [], MockProvider([]))

    def test_one_step_prompts_grow(self):
        mock = MockProvider([("*", "Extract | 1 | x | Not a final answer"), ("*", "Refine | a | y | Final answer")])
        run_derivation("q", [Chunk("d#0", "d", "h", 0)], mock, EngineConfig(mode="one-step"))
        first, second = (c.prompt for c in mock.call_log)
        assert "a. x" not in first and "a. x" in second


class TestBaselines:
    def chunks(self):
        return [Chunk(f"d#{i}", "d", t, 0) for i, t in enumerate(["alpha text", "beta text", "gamma text"])]

    def test_plain_rag(self):
        mock = MockProvider([("*", "R")])
        assert answer_plain_rag("q?", self.chunks(), mock) == "R"
        prompt = mock.call_log[0].prompt
        assert all(t in prompt for t in ["alpha text", "beta text", "gamma text"])
        assert "cannot be answered" in prompt

    def test_plain_rag_deterministic(self):
        a, b = MockProvider([("*", "R")]), MockProvider([("*", "R")])
        answer_plain_rag("q?", self.chunks(), a)
        answer_plain_rag("q?", self.chunks(), b)
        assert a.call_log == b.call_log

    def test_plain_rag_empty(self):
        with pytest.raises(EmptyInput):
            answer_plain_rag("q", [], MockProvider([("*", "R")]))

    def test_long_context(self):
        docs = [Document("a.md", "full text of A\nline two"), Document("b.md", "full text of B")]
        mock = MockProvider([("*", "L")])
        assert answer_long_context("q?", docs, mock) == "L"
        prompt = mock.call_log[0].prompt
        assert docs[0].text in prompt and docs[1].text in prompt
        assert len(mock.call_log) == 1

    def test_long_context_overflow(self):
        with pytest.raises(ContextOverflow):
            answer_long_context("q", [Document("a", "x" * 101)], MockProvider([("*", "L")]), max_context_chars=100)

    def test_long_context_empty(self):
        with pytest.raises(EmptyInput):
            answer_long_context("q", [], MockProvider([("*", "L")]))

    def test_spanish_templates(self):
        mock = MockProvider([("*", "R")])
        answer_plain_rag("¿q?", self.chunks(), mock, language="es")
        assert "Pregunta del usuario: ¿q?" in mock.call_log[0].prompt
