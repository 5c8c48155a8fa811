"""Question 800: proteins tied to dilated cardiomyopathy 1DD and the NOS3-HSP90 complex.

Runs the structured pattern, hides the "sscore" serendipity answer by edge
removal, and then lets the greedy swap pick a serendipity set on its own.
"""
from serenqa import datasets
from serenqa.embed import propagate_embeddings
from serenqa.kg import load_benchmark, load_edges
from serenqa.partition import budget, greedy_swap, initial_partition
from serenqa.pattern import PatternQuery, execute_pattern, split_graph
from serenqa.prob import ProbModel
from serenqa.rns import AnswerPartition, RnsScorer

g = load_edges(datasets.path("qid800_graph"))
rec = load_benchmark(datasets.path("qid800_benchmark"))[0]
print(rec.question)

q = PatternQuery.from_json(rec.graph_query, rec.pattern_type)
answers = execute_pattern(g, q)
for ent, name in sorted(answers.entities.items()):
    print(f"  {ent} ({name}) via {answers.witness_paths[ent][0]}")

part = rec.partition("sscore")
g_e, removed = split_graph(g, q, part.exact_matches, part.serendipity_set)
print("\nremoved to hide", part.serendipity_set, ":", sorted(removed))
print("pattern on the reduced graph:", sorted(execute_pattern(g_e, q).ids))

model = ProbModel.build(g)
t = propagate_embeddings(g, 64, 2, 42)
scorer = RnsScorer(model.pk, model.marginal, t)
for name, p in sorted(rec.partitions.items()):
    r = scorer.report(AnswerPartition(p.exact_matches, p.serendipity_set))
    print(f"{name:>7}: A_s={list(p.serendipity_set)} RNS={r.rns:.5f}")

cands = sorted(answers.ids)
state = greedy_swap(initial_partition(cands, budget(len(cands))), scorer)
print("\ngreedy choice:", state.partition.serendipity, f"tau={state.tau:.5f}", f"swaps={state.iterations}")
