"""Walk through the three RNS components on a four-node diamond graph.

    a -> b -> d
    a -> c -> d

Node d has no outgoing edges, so its transition row is uniform.
"""
from serenqa import datasets
from serenqa.embed import propagate_embeddings
from serenqa.kg import load_edges
from serenqa.prob import ProbModel
from serenqa.rns import AnswerPartition, RnsScorer, RnsWeights

g = load_edges(datasets.path("g4"))
model = ProbModel.build(g, k=3)

print("one-hop transitions:")
print(model.p1.toarray().round(4))
print("\nthree-hop mixture (weights 1/6, 1/3, 1/2):")
print(model.pk.toarray().round(4))
print(f"\nmarginal after {model.marginal.iterations} iterations:", model.marginal.values.round(5))

t = propagate_embeddings(g, dim=16, layers=1, seed=42)
scorer = RnsScorer(model.pk, model.marginal, t)

# score every way of splitting {a, b, c, d} into three existing answers and one surprise
print("\nsingle-answer serendipity sets:")
for s in "abcd":
    part = AnswerPartition(tuple(x for x in "abcd" if x != s), (s,))
    r = scorer.report(part)
    print(f"  A_s={{{s}}}  R={r.R:+.4f}  N={r.N:.4f}  S={r.S:.4f}  RNS={r.rns:.4f}")

# d is reachable from everything, so its mutual information term is close to zero,
# and it can even go slightly negative when the conditional is below the marginal
part = AnswerPartition(("a",), ("d",))
print("\nMI(a; d) =", scorer.report(part).MI)

# the shared-support surprise reading is no longer pinned at ln 2
shared = RnsScorer(model.pk, model.marginal, t, RnsWeights(), mode="shared")
print("S own =", scorer.report(part).S, " S shared =", shared.report(part).S)
