"""Beam exploration from GRIN2A and GRIN2C towards the hidden answer GRIN2B.

First with the deterministic heuristic policy, then with a policy that only
follows the ground-truth hops, and scores both with the exploration metrics.
"""
from serenqa import datasets
from serenqa.evalkit import seren_cov, seren_hit, type_match
from serenqa.explore import BeamParams, HeuristicPolicy, PathPolicy, beam_explore
from serenqa.kg import load_benchmark, load_edges

g = load_edges(datasets.path("grin2_graph"))
rec = load_benchmark(datasets.path("grin2_benchmark"))[0]
part = rec.partition("sscore")
params = BeamParams(n=30, h=3, seed=42)


def report(label, traces):
    leaves = [leaf for t in traces for leaf in t.leaves]
    summaries = [s for t in traces for s in t.summaries.values()]
    print(f"{label}: leaves={sorted({x['id'] for x in leaves})}")
    print(f"  SerenHit={seren_hit(leaves, part.serendipity_set)} "
          f"TypeMatch={type_match(leaves, part.serendipity_set, g)} "
          f"SerenCov={seren_cov(summaries, part.explore_paths):.2f}")


heuristic = [beam_explore(g, HeuristicPolicy(42), params, r, rec.question) for r in part.exact_matches]
report("heuristic", heuristic)
print(heuristic[0].summaries[3])

# protein nodes carry UniProt ids; the path strings name them by gene symbol
hops = [[("GRIN2A", "TRANSLATED_INTO", "Q12879"), ("Q12879", "ACTS_ON", "Q13224"),
         ("Q13224", "TRANSLATED_INTO", "GRIN2B")],
        [("GRIN2C", "TRANSLATED_INTO", "Q14957"), ("Q14957", "ACTS_ON", "DB03929"),
         ("DB03929", "CURATED_TARGETS", "GRIN2B")]]
oracle = [beam_explore(g, PathPolicy(hops), params, r, rec.question) for r in part.exact_matches]
report("\noracle", oracle)
