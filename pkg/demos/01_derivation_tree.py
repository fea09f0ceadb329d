"""
Building a derivation tree by hand
==================================

A derivation starts from numbered hypotheses (retrieved chunks) and grows by
applying rules. Each non-final conclusion gets the next letter label and can
be used by later steps.
"""

from derivare import DerivationTree, apply_step, render_tree, validate_tree

hypotheses = [
    "Enrollment is done through the student portal during the enrollment periods.",
    "A credit is a measure of the dedication required for a subject. "
    "A credit approximately equals one hour of weekly study, throughout an entire semester.",
    "To obtain the degree, students must accumulate the minimum number of credits.",
]
tree = DerivationTree.start("How many weekly hours does a 13-credit course need?", hypotheses)

###############################################################################
# Extract the relevant sentence from hypothesis 2. It becomes hypothesis ``a``.

label = apply_step(tree, "Extract", ["2"], "A credit approximately equals one hour of weekly study.", False)
print("new label:", label)

###############################################################################
# Instantiate the general statement for 13 credits, then close the tree.

apply_step(tree, "Instantiate", ["a"], "A 13-credit course needs about 13 hours of weekly study.", False)
apply_step(tree, "Concat", ["a", "b"], "One credit is about one weekly hour, so a 13-credit course needs about 13 hours a week.", True)

print(render_tree(tree))
print("violations:", validate_tree(tree))

###############################################################################
# Steps are checked as they are applied: wrong arity or unknown labels raise.

from derivare.errors import ArityMismatch

fresh = DerivationTree.start("q", hypotheses)
try:
    apply_step(fresh, "Concat", ["1"], "only one argument", False)
except ArityMismatch as exc:
    print("rejected:", exc)

###############################################################################
# Graphviz output for a figure.

print(render_tree(tree, "dot"))
