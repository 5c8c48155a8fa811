import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from conftest import random_graph
from serenqa.errors import DomainError, NotFoundError, StaleCacheError
from serenqa.kg import parse_edge_lines
from serenqa.prob import (ProbModel, build_transition, content_hash, dense_multiply_dnc, hop_weights,
                          khop_matrix, load_marginal, load_matrix, marginal, read_cache_header,
                          save_marginal, save_matrix)

# k=3 conditional matrix of the diamond a->b, a->c, b->d, c->d (d dangling),
# expanded by hand with exact fractions
G4_P3 = [[Fraction(1, 8), Fraction(5, 24), Fraction(5, 24), Fraction(11, 24)],
         [Fraction(11, 96), Fraction(17, 96), Fraction(17, 96), Fraction(17, 32)],
         [Fraction(11, 96), Fraction(17, 96), Fraction(17, 96), Fraction(17, 32)],
         [Fraction(17, 128), Fraction(73, 384), Fraction(73, 384), Fraction(187, 384)]]
# fixed point from a direct linear solve (1-l)(I - l P3^T)^-1 P0
G4_MARGINAL = [0.14333539229554607, 0.1969499250551808, 0.1969499250551808, 0.46276475759409197]


def test_g4_transition(g4):
    p1 = build_transition(g4)
    assert p1.ids == ("a", "b", "c", "d")
    assert p1.prob("a", "b") == 0.5 and p1.prob("b", "d") == 1.0
    assert np.allclose(p1.toarray()[3], 0.25)  # dangling row
    with pytest.raises(NotFoundError):
        p1.prob("a", "zz")


def test_parallel_edges_counted():
    g = parse_edge_lines(["a\tT\tr\tb\tT", "a\tT\ts\tb\tT", "a\tT\tr\tc\tT"])
    p1 = build_transition(g)
    assert p1.prob("a", "b") == pytest.approx(2 / 3)


def test_g4_khop_matches_hand_expansion(g4):
    pk = khop_matrix(build_transition(g4), 3)
    np.testing.assert_allclose(pk.toarray(), np.array(G4_P3, dtype=float), atol=1e-15)


def test_g4_marginal_matches_linear_solve(g4):
    pk = khop_matrix(build_transition(g4), 3)
    m = marginal(pk)
    np.testing.assert_allclose(m.values, G4_MARGINAL, atol=1e-10)
    assert m.residual(pk, 0.85) <= 1e-10
    assert m.iterations <= math.ceil(math.log(1e-10) / math.log(0.85)) + 2


def test_hop_weights():
    np.testing.assert_allclose(hop_weights(3), [1 / 6, 1 / 3, 1 / 2])
    np.testing.assert_allclose(hop_weights(1), [1.0])
    with pytest.raises(DomainError):
        hop_weights(0)


def test_k1_equals_p1(g4):
    p1 = build_transition(g4)
    np.testing.assert_array_equal(khop_matrix(p1, 1).toarray(), p1.toarray())


def test_marginal_domain(g4):
    pk = khop_matrix(build_transition(g4), 2)
    with pytest.raises(DomainError):
        marginal(pk, damping=1.0)
    with pytest.raises(DomainError):
        marginal(pk, tol=0)


@pytest.mark.parametrize("n", [1, 3, 63, 64, 65, 100, 130])
def test_dnc_matches_naive(n, rng):
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, n))
    naive = np.einsum("ik,kj->ij", A, B)
    np.testing.assert_allclose(dense_multiply_dnc(A, B), naive, atol=1e-9)
    np.testing.assert_allclose(dense_multiply_dnc(A, B, crossover=8, workers=3), naive, atol=1e-9)


def test_dnc_rejects_bad_shapes(rng):
    with pytest.raises(DomainError):
        dense_multiply_dnc(rng.standard_normal((3, 4)), rng.standard_normal((4, 3)))
    with pytest.raises(DomainError):
        dense_multiply_dnc(np.eye(3), np.eye(4))


def test_dense_and_sparse_paths_agree(rng):
    g = random_graph(rng, 40, 0.5)
    p1 = build_transition(g)
    assert not p1.is_sparse  # well above the fill threshold
    sparse_p1 = type(p1)(p1.ids, sp.csr_matrix(p1.toarray()), 1)
    np.testing.assert_allclose(khop_matrix(p1, 3).toarray(), khop_matrix(sparse_p1, 3).toarray(),
                               atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.floats(0.0, 0.4), st.integers(1, 4), st.integers(0, 2**31))
def test_khop_rows_stochastic(V, density, k, seed):
    g = random_graph(np.random.default_rng(seed), V, density)
    pk = khop_matrix(build_transition(g), k)
    np.testing.assert_allclose(pk.row_sums(), 1.0, atol=1e-9)
    assert pk.min_entry() >= 0.0
    m = marginal(pk)
    assert abs(m.values.sum() - 1.0) < 1e-9 and (m.values > 0).all()


def test_cache_roundtrip_and_staleness(tmp_path, g4):
    src = tmp_path / "g.tsv"
    src.write_text("a\tT\tr\tb\tT\n")
    digest = content_hash(src)
    model = ProbModel.build(g4)
    save_matrix(tmp_path / "pk.bin", model.pk, digest)
    save_marginal(tmp_path / "m.bin", model.marginal, 3, digest)
    assert read_cache_header(tmp_path / "pk.bin") == (4, 3, digest)
    ids = g4.sorted_ids()
    back = load_matrix(tmp_path / "pk.bin", ids, digest)
    np.testing.assert_array_equal(back.toarray(), model.pk.toarray())
    np.testing.assert_array_equal(load_marginal(tmp_path / "m.bin", ids, digest).values,
                                  model.marginal.values)
    with pytest.raises(StaleCacheError):
        load_matrix(tmp_path / "pk.bin", ids, b"x" * 32)
    with pytest.raises(StaleCacheError):
        load_matrix(tmp_path / "pk.bin", ids[:3], digest)
