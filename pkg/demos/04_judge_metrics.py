"""
Judging answers and aggregating scores
======================================

A judge model scores each answer against a reference from 1 to 5. Scores 1
and 2 are unacceptable. ``aggregate`` turns the scores into the summary
metrics; here it is fed published count vectors directly.
"""

from derivare import MockProvider, QaRecord, build_judge_prompt, parse_judge_output, run_eval, summary_from_counts

record = QaRecord(
    "How long is the right to take the final exam valid?",
    "For the six exam periods that follow the end of the course.",
    "Six exam periods.",
)
print(build_judge_prompt(record))

verdict = parse_judge_output("Feedback: Correct but terse. [RESULT] 4")
print(verdict)

###############################################################################
# Count vectors (#1..#5) for the three strategies on one query set.

rows = {
    "long context": (17, 15, 73, 25, 5),
    "plain RAG": (15, 15, 75, 27, 3),
    "derivation": (10, 4, 92, 25, 4),
}
for name, counts in rows.items():
    s = summary_from_counts(counts)
    print(f"{name:<13} acceptable {s.pct_acceptable:5.1f}%  avg {s.average:.2f}  std {s.std_dev:.2f}")

###############################################################################
# A full (tiny) evaluation run with a scripted judge. Failed judgements are
# excluded and counted, never given a made-up score.

judge = MockProvider([
    ("Instruction to evaluate:\nFirst?", "Good. [RESULT] 5"),
    ("Instruction to evaluate:\nSecond?", "The judge rambled without a score."),
])
records = [QaRecord("First?", "ref", "cand"), QaRecord("Second?", "ref", "cand")]
verdicts, summary = run_eval(records, judge)
print([v and v.score for v in verdicts], summary)
