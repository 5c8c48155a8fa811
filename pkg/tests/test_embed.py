import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from serenqa.embed import (from_vectors, load_embeddings, normalized_distance,
                           propagate_embeddings)
from serenqa.errors import NotFoundError, ParseError, ValidationError


def write(tmp_path, text):
    p = tmp_path / "e.txt"
    p.write_text(text)
    return p


def test_load_normalises(tmp_path):
    t = load_embeddings(write(tmp_path, "D=2\nx\t3 4\ny\t0 2\nz\t-1 0\n"))
    assert len(t) == 3 and t.dim == 2
    np.testing.assert_allclose(t.vector("x"), [0.6, 0.8])
    np.testing.assert_allclose(np.linalg.norm(t.vectors, axis=1), 1.0, atol=1e-9)


def test_load_errors(tmp_path):
    with pytest.raises(ParseError):
        load_embeddings(write(tmp_path, "D=4\nx\t1 2 3 4\ny\t1 2 3 4 5\n"))
    with pytest.raises(ValidationError, match="'y'"):
        load_embeddings(write(tmp_path, "D=2\nx\t1 0\ny\t0 0\n"))
    with pytest.raises(ParseError):
        load_embeddings(write(tmp_path, "x\t1 0\n"))


def test_dump_roundtrip(tmp_path, g4):
    t = propagate_embeddings(g4, 5, 1, 3)
    t.dump(tmp_path / "o.txt")
    back = load_embeddings(tmp_path / "o.txt")
    np.testing.assert_allclose(back.vectors, t.vectors, atol=1e-15)


def test_distances():
    t = from_vectors({"a": [1, 0], "b": [0, 1], "c": [-1, 0]})
    assert normalized_distance(t, "a", "a") == 0
    assert normalized_distance(t, "a", "b") == pytest.approx(math.sqrt(2) / 2)
    assert normalized_distance(t, "a", "c") == pytest.approx(1.0)
    with pytest.raises(NotFoundError):
        normalized_distance(t, "a", "zz")


def test_propagation_l0_is_normalised_features(g4):
    t = propagate_embeddings(g4, 6, 0, 11)
    raw = np.random.default_rng(11).standard_normal((4, 6))
    np.testing.assert_allclose(t.vectors, raw / np.linalg.norm(raw, axis=1, keepdims=True))


def test_propagation_deterministic(g4):
    a = propagate_embeddings(g4, 8, 2, 42)
    b = propagate_embeddings(g4, 8, 2, 42)
    assert a.vectors.tobytes() == b.vectors.tobytes()


def test_automorphic_nodes_contract(g4):
    # b and c share the neighbourhood {a, d}; one round must pull them together
    feats = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0], [1.0, 1.0, 1.0]])
    d0 = normalized_distance(propagate_embeddings(g4, 3, 0, features=feats), "b", "c")
    t1 = propagate_embeddings(g4, 3, 1, features=feats)
    d1 = normalized_distance(t1, "b", "c")
    assert d1 < d0
    # oracle: every node of the 4-cycle has degree 3 with the self-loop, so a
    # round averages each node with its two neighbours
    adj = {"a": "bc", "b": "ad", "c": "ad", "d": "bc"}
    idx = {n: i for i, n in enumerate("abcd")}
    x = np.array([(feats[idx[n]] + sum(feats[idx[m]] for m in adj[n])) / 3 for n in "abcd"])
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    assert d1 == pytest.approx(np.linalg.norm(x[1] - x[2]) / 2, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.floats(-10, 10), min_size=3, max_size=3), min_size=2, max_size=6))
def test_distance_symmetric_and_bounded(rows):
    rows = [r for r in rows if np.linalg.norm(r) > 1e-6]
    if len(rows) < 2:
        return
    t = from_vectors({f"v{i}": r for i, r in enumerate(rows)})
    for i in t.ids:
        for j in t.ids:
            d = normalized_distance(t, i, j)
            assert 0.0 <= d <= 1.0
            assert d == normalized_distance(t, j, i)
