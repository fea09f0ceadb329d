"""
One-step versus whole-derivation mode
=====================================

In one-step mode every rule application is its own model call. In
whole-derivation mode the model writes the full transcript in one call from
few-shot examples. With a scripted mock both modes give the same tree, and
the call logs show the cost difference.
"""

from derivare import Chunk, EngineConfig, MockProvider, render_tree, run_derivation

chunks = [
    Chunk("exams.md#0", "exams.md", "Students with at least 25% of the points earn the right to take the final exam.", 0),
    Chunk("exams.md#1", "exams.md", "The right to take the final exam remains valid for the six exam periods that follow the course.", 0),
    Chunk("services.md#0", "services.md", "The central library is open Monday to Friday from 8:00 to 21:00.", 0),
]
question = "How long is the right to the final exam valid, and is there a fee?"
lines = [
    "Extract | 2 | The right remains valid for the six exam periods that follow the course. | Not a final answer",
    "NoInfo |  | There is no information about an exam fee. | Not a final answer",
    "Concat | a,b | The right lasts six exam periods; there is no information about a fee. | Final answer",
]

one = MockProvider([("*", line) for line in lines])
tree_one = run_derivation(question, chunks, one, EngineConfig(mode="one-step"))

whole = MockProvider([("User question:", "\n\n".join(lines))])
tree_whole = run_derivation(question, chunks, whole, EngineConfig(mode="whole"))

print(render_tree(tree_whole))
print("same steps:", tree_one.steps == tree_whole.steps)
print("calls  one-step:", len(one.call_log), " whole:", len(whole.call_log))

###############################################################################
# A model that never concludes runs into the step budget and the tree comes
# back aborted instead of raising.

stuck = MockProvider([("*", "Extract | 1 | Still thinking. | Not a final answer")] * 4)
tree = run_derivation(question, chunks, stuck, EngineConfig(mode="one-step", max_steps=4))
print(tree.status.value, "-", tree.abort_reason)

###############################################################################
# The start of the whole-derivation prompt the model actually saw.

print(whole.call_log[0].prompt[:600])
