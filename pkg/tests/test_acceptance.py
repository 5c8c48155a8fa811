"""Acceptance criteria, one test each, with a pass/fail line per criterion.

The lines are printed in pytest's terminal summary; running this file
directly (``python3 tests/test_acceptance.py``) prints them too.
"""
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from serenqa import datasets
from serenqa.embed import EmbeddingTable, propagate_embeddings
from serenqa.evalkit import f1, hit_rate, pearson, pearson_matrix, seren_cov, seren_hit
from serenqa.explore import BeamParams, HeuristicPolicy, PathPolicy, beam_explore
from serenqa.kg import Edge, Graph, NodeRef, load_benchmark, load_edges, parse_path_string
from serenqa.partition import TOLERANCE, brute_force_partition, budget, greedy_swap, initial_partition
from serenqa.pattern import PatternQuery, execute_pattern, split_graph
from serenqa.prob import (MarginalVector, ProbModel, TransitionMatrix, build_transition,
                          dense_multiply_dnc, khop_matrix, marginal)
from serenqa.rns import AnswerPartition, RnsScorer

RESULTS: dict = {}


@contextmanager
def criterion(number, title, limit=None):
    start = time.perf_counter()
    detail = {}
    try:
        yield detail
        elapsed = time.perf_counter() - start
        ok = limit is None or elapsed < limit
        RESULTS[number] = (ok, f"{title} ({elapsed:.2f}s{'' if limit is None else f' < {limit}s'})"
                           + (f" {detail['note']}" if "note" in detail else ""))
        assert ok, f"criterion {number} exceeded {limit}s: {elapsed:.2f}s"
    except BaseException as exc:
        if number not in RESULTS:
            RESULTS[number] = (False, f"{title}: {type(exc).__name__}: {exc}")
        raise


def result_lines():
    return [f"criterion {n}: {'PASS' if ok else 'FAIL'} - {text}"
            for n, (ok, text) in sorted(RESULTS.items())]


def random_graph(rng, V, density):
    ids = [f"v{i:03d}" for i in range(V)]
    E = max(0, int(density * V * V))
    src, tgt = rng.integers(V, size=E), rng.integers(V, size=E)
    return Graph([NodeRef(i, "T") for i in ids],
                 [Edge(ids[s], "R", ids[t]) for s, t in zip(src, tgt)])


def graph_suite():
    rng = np.random.default_rng(2024)
    out = []
    for i in range(100):
        V = int(rng.integers(2, 201))
        density = [0.005, 0.02, 0.1, 0.4][i % 4]  # sparse through dense
        out.append(random_graph(rng, V, density))
    return out


@pytest.fixture(scope="module")
def graphs():
    return graph_suite()


def test_criterion_1_stochasticity(graphs):
    with criterion(1, "k-hop matrices row-stochastic and non-negative on 100 graphs", 30):
        for g in graphs:
            p1 = build_transition(g)
            for k in (1, 2, 3):
                pk = khop_matrix(p1, k)
                assert np.abs(pk.row_sums() - 1).max() <= 1e-9
                assert pk.min_entry() >= 0.0


def test_criterion_2_marginal_fixed_point(graphs):
    lam, eps = 0.85, 1e-10
    bound = math.ceil(math.log(eps) / math.log(lam)) + 2
    with criterion(2, "marginal residual <= 1e-10 within the iteration bound", 60) as d:
        worst = 0
        for g in graphs:
            pk = khop_matrix(build_transition(g), 3)
            m = marginal(pk, lam, eps)
            assert m.residual(pk, lam) <= eps
            assert m.iterations <= bound
            worst = max(worst, m.iterations)
        d["note"] = f"max iterations {worst} <= {bound}"


def test_criterion_3_matmul_oracle():
    rng = np.random.default_rng(3)
    with criterion(3, "divide-and-conquer product equals naive product on 50 pairs", 60):
        sizes = list(rng.integers(1, 257, size=48)) + [256, 255]
        for n in sizes:
            A = rng.standard_normal((n, n))
            B = rng.standard_normal((n, n))
            naive = np.einsum("ik,kj->ij", A, B)
            assert np.abs(dense_multiply_dnc(A, B) - naive).max() <= 1e-9


def rns_instance(rng, V=16, n_cands=8):
    g = random_graph(rng, V, float(rng.uniform(0.05, 0.3)))
    model = ProbModel.build(g, k=3)
    t = propagate_embeddings(g, 8, 1, int(rng.integers(2**31)))
    scorer = RnsScorer(model.pk, model.marginal, t)
    cands = sorted(rng.choice(model.pk.ids, size=n_cands, replace=False).tolist())
    return model, t, scorer, cands


def test_criterion_4_rns_axioms():
    rng = np.random.default_rng(4)
    with criterion(4, "RNS axioms: scaling, independence, non-monotonicity", 120) as d:
        # (a) common positive scaling keeps the argmax
        for trial in range(100):
            _, _, scorer, cands = rns_instance(rng, n_cands=int(rng.integers(2, 9)))
            b = budget(len(cands))
            c = float(rng.uniform(0.01, 100))
            base = brute_force_partition(cands, b, scorer)

            def scaled(p, c=c):
                r, n, s, _ = scorer.components(p)
                w = scorer.weights
                return w.alpha * c * r + w.beta * c * n + w.gamma * c * s
            assert brute_force_partition(cands, b, scaled).partition == base.partition
        # (b) perturbing entities outside the partition changes no score bit
        for trial in range(20):
            model, t, scorer, cands = rns_instance(rng)
            part = AnswerPartition(tuple(cands[:5]), tuple(cands[5:]))
            ids = list(model.pk.ids)
            out = [i for i, x in enumerate(ids) if x not in set(cands)]
            pk = model.pk.toarray().copy()
            pk[np.ix_(out, out)] = rng.random((len(out), len(out)))
            mv = model.marginal.values.copy()
            mv[out] = rng.random(len(out))
            vecs = t.vectors.copy()
            vecs[out] = rng.standard_normal((len(out), t.dim))
            vecs[out] /= np.linalg.norm(vecs[out], axis=1, keepdims=True)
            other = RnsScorer(TransitionMatrix(model.pk.ids, pk, 3), MarginalVector(model.marginal.ids, mv),
                              EmbeddingTable(t.ids, vecs))
            assert other(part) == scorer(part)
        # (c) a smaller serendipity set can outscore a larger one
        witness = None
        for trial in range(1000):
            _, _, scorer, cands = rns_instance(rng, V=10, n_cands=4)
            small = AnswerPartition((cands[0],), (cands[1],))
            large = AnswerPartition((cands[0],), (cands[1], cands[2]))
            if scorer(small) > scorer(large):
                witness = trial
                break
        assert witness is not None
        d["note"] = f"witness at fixture {witness}"


def test_criterion_5_greedy_swap():
    rng = np.random.default_rng(5)
    with criterion(5, "greedy swap monotone, 1-swap optimal, >= 95% of brute force", 120) as d:
        greedy_scores, best_scores, optimal = [], [], 0
        for trial in range(200):
            _, _, scorer, cands = rns_instance(rng, n_cands=int(rng.integers(2, 9)))
            b = budget(len(cands))
            init = initial_partition(cands, b)
            state = greedy_swap(init, scorer)
            taus = [scorer(init)] + [s["tau"] for s in state.trace]
            assert all(y > x for x, y in zip(taus, taus[1:]))
            assert state.iterations <= math.comb(len(cands), b)
            p = state.partition
            for i in p.existing:
                for j in p.serendipity:
                    assert scorer(p.swapped(i, j)) - state.tau <= TOLERANCE
            best = brute_force_partition(cands, b, scorer)
            greedy_scores.append(state.tau)
            best_scores.append(best.tau)
            optimal += abs(best.tau - state.tau) <= 1e-12
        ratio = float(np.mean(greedy_scores) / np.mean(best_scores))
        assert ratio >= 0.95
        d["note"] = f"mean ratio {ratio:.6f}, optimum reached {optimal}/200"


def test_criterion_6_pattern_fixture():
    with criterion(6, "qid 800 pattern and sscore split", 5):
        g = load_edges(datasets.path("qid800_graph"))
        rec = load_benchmark(datasets.path("qid800_benchmark"))[0]
        q = PatternQuery.from_json(rec.graph_query, rec.pattern_type)
        assert execute_pattern(g, q).ids == {"P29474", "P07900"}
        part = rec.partition("sscore")
        assert part.exact_matches == ("P29474",) and part.serendipity_set == ("P07900",)
        h, _ = split_graph(g, q, part.exact_matches, part.serendipity_set)
        assert execute_pattern(h, q).ids == {"P29474"}


def _hops_for(g, path_string):
    """Map a ground-truth path string onto graph triples by node id or name."""
    tokens = parse_path_string(path_string)
    by_name = {}
    for n in g.nodes.values():
        by_name.setdefault((n.name, n.type), n.id)
    names = []
    for i, tok in enumerate(tokens[::2]):
        if 0 < i < len(tokens) // 2:
            name, ty = tok.rsplit(":", 1)
            names.append(by_name[(name, ty)])
        else:
            names.append(tok)
    rels = tokens[1::2]
    return [(names[i], rels[i], names[i + 1]) for i in range(len(rels))]


def test_criterion_7_exploration_fixture():
    with criterion(7, "GRIN2 exploration: oracle SerenHit=1, SerenCov=1; heuristic deterministic", 10):
        g = load_edges(datasets.path("grin2_graph"))
        rec = load_benchmark(datasets.path("grin2_benchmark"))[0]
        part = rec.partition("sscore")
        policy = PathPolicy([_hops_for(g, p) for p in part.explore_paths])
        params = BeamParams(n=30, h=3)
        traces = [beam_explore(g, policy, params, root, rec.question) for root in part.exact_matches]
        leaves = [leaf for t in traces for leaf in t.leaves]
        summaries = [s for t in traces for s in t.summaries.values()]
        assert seren_hit(leaves, part.serendipity_set) == 1
        assert seren_cov(summaries, part.explore_paths) == 1.0
        hp = BeamParams(n=30, h=3, seed=42)
        runs = [beam_explore(g, HeuristicPolicy(42), hp, "GRIN2A", rec.question).dumps() for _ in range(2)]
        assert runs[0] == runs[1]


def test_criterion_8_metric_arithmetic():
    with criterion(8, "hit/f1/pearson hand values; identical strategies correlate at 1.0"):
        assert abs(hit_rate({"P07900"}, {"P07900"}) - 1.0) <= 1e-5
        assert abs(hit_rate(set(), {"P07900"}) - 0.0) <= 1e-5
        assert abs(hit_rate({"x"}, {"x", "y"}) - 0.5) <= 1e-5
        assert abs(f1({"x", "y"}, {"x", "y"}) - 1.0) <= 1e-5
        assert abs(f1({"x", "z"}, {"x", "y"}) - 0.5) <= 1e-5
        assert abs(f1({"z"}, {"x", "y"}) - 0.0) <= 1e-5
        assert abs(pearson([1, 2, 3], [1, 2, 3]) - 1.0) <= 1e-5
        assert abs(pearson([1, 2, 3], [-1, -2, -3]) + 1.0) <= 1e-5
        assert abs(pearson([1, 2, 3], [1, 2, 4]) - 0.98198) <= 1e-5
        series = {1: 0.2, 2: 0.9, 3: 0.4, 4: 0.7}
        mat = pearson_matrix({"llm": series, "sscore": dict(series), "expert": dict(series)})
        assert all(abs(mat[a][b] - 1.0) <= 1e-12 for a in mat for b in mat)


def test_criterion_9_budget_rule():
    with criterion(9, "budget(4)=1, budget(5)=1, budget(12)=2"):
        assert (budget(4), budget(5), budget(12)) == (1, 1, 2)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
