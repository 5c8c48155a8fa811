"""Graph probabilistic models: one-hop transitions, k-hop conditionals, marginals.

The one-hop matrix counts parallel edges and normalises rows; a node with no
outgoing edges gets the uniform row ``1/V``. The k-hop matrix mixes powers of
the one-hop matrix with weights proportional to the hop count, so longer
connections weigh more. The marginal is the fixed point of a damped
iteration over the transposed k-hop matrix started from the uniform vector.
"""
from __future__ import annotations

import hashlib
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, DomainError, NotFoundError, ParseError, StaleCacheError
from .kg import Graph

DENSE_FILL = 0.25
CROSSOVER = 64

Matrix = Union[np.ndarray, sp.csr_matrix]


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic matrix with a node-id <-> row-index bijection.

    ``matrix`` is a CSR matrix while sparse and a dense ndarray once more than
    a quarter of the entries are nonzero.
    """

    ids: tuple
    matrix: Matrix
    k: int = 1

    @property
    def V(self) -> int:
        return len(self.ids)

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    @property
    def index(self) -> dict:
        idx = self.__dict__.get("_index")
        if idx is None:
            idx = {nid: i for i, nid in enumerate(self.ids)}
            object.__setattr__(self, "_index", idx)
        return idx

    def position(self, node_id) -> int:
        try:
            return self.index[node_id]
        except KeyError:
            raise NotFoundError(f"node {node_id!r} has no row in the transition matrix") from None

    def prob(self, source, target) -> float:
        """Conditional probability of reaching ``target`` from ``source``."""
        return float(self.matrix[self.position(source), self.position(target)])

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def min_entry(self) -> float:
        if self.is_sparse:
            data = self.matrix.data
            return float(min(data.min(), 0.0)) if data.size else 0.0
        return float(self.matrix.min())


@dataclass(frozen=True, eq=False)
class MarginalVector:
    ids: tuple
    values: np.ndarray
    iterations: int = 0

    @property
    def index(self) -> dict:
        idx = self.__dict__.get("_index")
        if idx is None:
            idx = {nid: i for i, nid in enumerate(self.ids)}
            object.__setattr__(self, "_index", idx)
        return idx

    def prob(self, node_id) -> float:
        try:
            return float(self.values[self.index[node_id]])
        except KeyError:
            raise NotFoundError(f"node {node_id!r} has no marginal probability") from None

    def residual(self, pk: TransitionMatrix, damping: float) -> float:
        """L1 norm of ``P - (damping * Pk^T P + (1 - damping) * uniform)``."""
        v = self.values
        p0 = np.full(v.size, 1.0 / v.size)
        return float(np.abs(v - (damping * (pk.matrix.T @ v) + (1 - damping) * p0)).sum())


def _maybe_dense(m: Matrix) -> Matrix:
    if sp.issparse(m):
        n = m.shape[0]
        if n and m.nnz > DENSE_FILL * n * n:
            return m.toarray()
        return m.tocsr()
    return m


def build_transition(g: Graph) -> TransitionMatrix:
    """One-hop transition matrix of ``g`` over its nodes in sorted id order."""
    if g.V < 1:
        raise DomainError("transition matrix needs at least one node")
    ids = tuple(g.sorted_ids())
    index = {nid: i for i, nid in enumerate(ids)}
    V = len(ids)
    rows = np.fromiter((index[e.source] for e in g.edges), dtype=np.int64, count=g.E)
    cols = np.fromiter((index[e.target] for e in g.edges), dtype=np.int64, count=g.E)
    counts = sp.coo_matrix((np.ones(g.E), (rows, cols)), shape=(V, V)).tocsr()
    counts.sum_duplicates()
    out_degree = np.asarray(counts.sum(axis=1)).ravel()
    inv = np.divide(1.0, out_degree, out=np.zeros(V), where=out_degree > 0)
    normalised = sp.diags(inv) @ counts
    dangling = np.flatnonzero(out_degree == 0)
    if dangling.size:
        fill_rows = np.repeat(dangling, V)
        fill_cols = np.tile(np.arange(V), dangling.size)
        uniform = sp.coo_matrix((np.full(fill_rows.size, 1.0 / V), (fill_rows, fill_cols)),
                                shape=(V, V))
        normalised = normalised + uniform
    return TransitionMatrix(ids, _maybe_dense(sp.csr_matrix(normalised)), 1)


def hop_weights(k: int) -> np.ndarray:
    """``alpha_h = h / (1 + ... + k)`` for ``h = 1..k``."""
    if k < 1:
        raise DomainError(f"hop count must be >= 1, got {k}")
    h = np.arange(1, k + 1, dtype=float)
    return h / h.sum()


def khop_matrix(p1: TransitionMatrix, k: int = 3, workers: int = 1) -> TransitionMatrix:
    """Hop-weighted mixture ``sum_h alpha_h P1^h`` of the first ``k`` powers."""
    alphas = hop_weights(k)
    base = p1.matrix
    power = base
    acc = alphas[0] * base
    for h in range(2, k + 1):
        if sp.issparse(power) and sp.issparse(base):
            power = _maybe_dense(power @ base)
        else:
            left = power.toarray() if sp.issparse(power) else power
            right = base.toarray() if sp.issparse(base) else base
            # Strassen's subtractions leave ~1e-18 negatives in a product of
            # non-negative matrices; clip that round-off
            power = np.maximum(dense_multiply_dnc(left, right, workers=workers), 0.0)
        acc = acc + alphas[h - 1] * power
    if sp.issparse(acc):
        acc = _maybe_dense(sp.csr_matrix(acc))
    else:
        acc = np.asarray(acc)
    return TransitionMatrix(p1.ids, acc, k)


def marginal(pk: TransitionMatrix, damping: float = 0.85, tol: float = 1e-10) -> MarginalVector:
    """Stationary node distribution by damped iteration from the uniform vector.

    Iterates ``P <- damping * Pk^T P + (1 - damping) * P0`` until the L1 change
    drops below ``tol`` and returns the last iterate.
    """
    if not 0.0 < damping < 1.0:
        raise DomainError(f"damping must lie in (0, 1), got {damping}")
    if tol <= 0:
        raise DomainError("tolerance must be positive")
    V = pk.V
    p0 = np.full(V, 1.0 / V)
    transposed = pk.matrix.T.tocsr() if pk.is_sparse else np.ascontiguousarray(pk.matrix.T)
    limit = math.ceil(math.log(tol) / math.log(damping)) + 64
    p = p0
    for t in range(1, limit + 1):
        nxt = damping * (transposed @ p) + (1.0 - damping) * p0
        diff = float(np.abs(nxt - p).sum())
        p = nxt
        if diff < tol:
            return MarginalVector(pk.ids, p, t)
    raise ConvergenceError(f"no convergence to {tol} after {limit} iterations")


# --------------------------------------------------------------------------
# divide-and-conquer multiplication

def _next_pow2(n: int) -> int:
    return 1 << (n - 1).bit_length()


def _strassen(A: np.ndarray, B: np.ndarray, crossover: int, pool=None) -> np.ndarray:
    n = A.shape[0]
    if n < crossover or n % 2:
        return A @ B
    h = n // 2
    A11, A12, A21, A22 = A[:h, :h], A[:h, h:], A[h:, :h], A[h:, h:]
    B11, B12, B21, B22 = B[:h, :h], B[:h, h:], B[h:, :h], B[h:, h:]
    operands = [
        (A11 + A22, B11 + B22),
        (A21 + A22, B11),
        (A11, B12 - B22),
        (A22, B21 - B11),
        (A11 + A12, B22),
        (A21 - A11, B11 + B12),
        (A12 - A22, B21 + B22),
    ]
    if pool is not None:
        futures = [pool.submit(_strassen, x, y, crossover) for x, y in operands]
        M1, M2, M3, M4, M5, M6, M7 = (f.result() for f in futures)
    else:
        M1, M2, M3, M4, M5, M6, M7 = (_strassen(x, y, crossover) for x, y in operands)
    C = np.empty((n, n), dtype=np.result_type(A, B))
    C[:h, :h] = M1 + M4 - M5 + M7
    C[:h, h:] = M3 + M5
    C[h:, :h] = M2 + M4
    C[h:, h:] = M1 - M2 + M3 + M6
    return C


def dense_multiply_dnc(A, B, crossover: int = CROSSOVER, workers: int = 1) -> np.ndarray:
    """Strassen-style product of two square matrices.

    Inputs are zero-padded to the next power of two; blocks smaller than
    ``crossover`` are multiplied directly. With ``workers > 1`` the seven
    top-level block products run on a thread pool.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
        raise DomainError(f"need two square matrices of equal size, got {A.shape} and {B.shape}")
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    m = _next_pow2(n)
    if m != n:
        Ap = np.zeros((m, m))
        Bp = np.zeros((m, m))
        Ap[:n, :n] = A
        Bp[:n, :n] = B
        A, B = Ap, Bp
    if workers > 1 and m >= crossover:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            C = _strassen(A, B, crossover, pool)
    else:
        C = _strassen(A, B, crossover)
    return C[:n, :n]


# --------------------------------------------------------------------------
# on-disk cache

CACHE_MAGIC = b"SRNQAPK1"
_HEADER = struct.Struct("<8sQI32s")
_TRIPLE = np.dtype([("row", "<i8"), ("col", "<i8"), ("val", "<f8")])


def content_hash(path) -> bytes:
    """SHA-256 digest of a file's bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.digest()


def _write_triples(path, V: int, k: int, digest: bytes, rows, cols, vals):
    triples = np.empty(len(rows), dtype=_TRIPLE)
    triples["row"], triples["col"], triples["val"] = rows, cols, vals
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, V, k, digest))
        fh.write(triples.tobytes())
    tmp.replace(path)


def read_cache_header(path) -> tuple[int, int, bytes]:
    """``(V, k, digest)`` from a cache file header."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise ParseError(f"{path}: truncated cache header")
    magic, V, k, digest = _HEADER.unpack(raw)
    if magic != CACHE_MAGIC:
        raise ParseError(f"{path}: not a serenqa matrix cache")
    return V, k, digest


def _read_triples(path):
    V, k, digest = read_cache_header(path)
    body = Path(path).read_bytes()[_HEADER.size:]
    if len(body) % _TRIPLE.itemsize:
        raise ParseError(f"{path}: truncated triple section")
    return V, k, digest, np.frombuffer(body, dtype=_TRIPLE)


def save_matrix(path, tm: TransitionMatrix, digest: bytes) -> None:
    coo = sp.coo_matrix(tm.matrix)
    _write_triples(path, tm.V, tm.k, digest, coo.row, coo.col, coo.data)


def load_matrix(path, ids: Sequence[str], digest: Optional[bytes] = None) -> TransitionMatrix:
    V, k, stored, triples = _read_triples(path)
    if V != len(ids):
        raise StaleCacheError(f"{path}: cache has V={V}, graph has V={len(ids)}")
    if digest is not None and stored != digest:
        raise StaleCacheError(f"{path}: content hash does not match the edge file")
    m = sp.coo_matrix((triples["val"], (triples["row"], triples["col"])), shape=(V, V))
    return TransitionMatrix(tuple(ids), _maybe_dense(m.tocsr()), k)


def save_marginal(path, mv: MarginalVector, k: int, digest: bytes) -> None:
    n = mv.values.size
    _write_triples(path, n, k, digest, np.arange(n), np.zeros(n, dtype=np.int64), mv.values)


def load_marginal(path, ids: Sequence[str], digest: Optional[bytes] = None) -> MarginalVector:
    V, k, stored, triples = _read_triples(path)
    if V != len(ids):
        raise StaleCacheError(f"{path}: cache has V={V}, graph has V={len(ids)}")
    if digest is not None and stored != digest:
        raise StaleCacheError(f"{path}: content hash does not match the edge file")
    values = np.zeros(V)
    values[triples["row"]] = triples["val"]
    return MarginalVector(tuple(ids), values)


@dataclass(frozen=True, eq=False)
class ProbModel:
    """The probability models shared by every query over one graph."""

    p1: TransitionMatrix
    pk: TransitionMatrix
    marginal: MarginalVector

    @classmethod
    def build(cls, g: Graph, k: int = 3, damping: float = 0.85, tol: float = 1e-10,
              workers: int = 1) -> "ProbModel":
        p1 = build_transition(g)
        pk = khop_matrix(p1, k, workers=workers)
        return cls(p1, pk, marginal(pk, damping, tol))
