"""Entity embeddings for the relevance component.

Embedding files start with a ``D=<dim>`` header followed by one
``id<TAB>v1 v2 ... vD`` line per entity. Every vector is L2-normalised on
load, so the Euclidean distance between two entities is at most 2.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, NotFoundError, ParseError, ValidationError
from .kg import Graph


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    ids: tuple
    vectors: np.ndarray  # shape (len(ids), D)
    normalized: bool = True

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def index(self) -> dict:
        idx = self.__dict__.get("_index")
        if idx is None:
            idx = {nid: i for i, nid in enumerate(self.ids)}
            object.__setattr__(self, "_index", idx)
        return idx

    def __contains__(self, node_id) -> bool:
        return node_id in self.index

    def __len__(self) -> int:
        return len(self.ids)

    def vector(self, node_id) -> np.ndarray:
        try:
            return self.vectors[self.index[node_id]]
        except KeyError:
            raise NotFoundError(f"no embedding for {node_id!r}") from None

    def missing(self, ids) -> list:
        return sorted(i for i in ids if i not in self.index)

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"D={self.dim}\n")
            for nid, vec in zip(self.ids, self.vectors):
                fh.write(nid + "\t" + " ".join(repr(float(x)) for x in vec) + "\n")


def _normalize_rows(ids, vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValidationError(f"cannot normalise zero vector for id {ids[zero[0]]!r}")
    return vectors / norms[:, None]


def from_vectors(vectors: Mapping[str, "np.ndarray | list"]) -> EmbeddingTable:
    """Table from an id -> vector mapping; vectors are normalised."""
    ids = tuple(vectors)
    if not ids:
        return EmbeddingTable((), np.zeros((0, 0)))
    arrays = [np.asarray(vectors[i], dtype=float) for i in ids]
    dims = {a.shape for a in arrays}
    if len(dims) != 1 or len(next(iter(dims))) != 1:
        raise ParseError(f"inconsistent embedding dimensions {sorted(d[0] for d in dims if d)}")
    return EmbeddingTable(ids, _normalize_rows(ids, np.vstack(arrays)))


def load_embeddings(path) -> EmbeddingTable:
    ids: list[str] = []
    rows: list[list[float]] = []
    dim: Optional[int] = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if dim is None:
                if not line.startswith("D="):
                    raise ParseError("embedding file must start with 'D=<dim>'", lineno)
                try:
                    dim = int(line[2:])
                except ValueError:
                    raise ParseError(f"bad dimension header {line!r}", lineno) from None
                if dim < 1:
                    raise ParseError("dimension must be positive", lineno)
                continue
            nid, sep, rest = raw.rstrip("\r\n").partition("\t")
            if not sep or not nid:
                raise ParseError("expected 'id<TAB>values'", lineno)
            try:
                values = [float(x) for x in rest.split()]
            except ValueError:
                raise ParseError("non-numeric embedding value", lineno) from None
            if len(values) != dim:
                raise ParseError(f"{nid!r} has dimension {len(values)}, header says {dim}", lineno)
            ids.append(nid)
            rows.append(values)
    if dim is None:
        raise ParseError("empty embedding file")
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate id in embedding file")
    vectors = np.array(rows, dtype=float).reshape(len(rows), dim)
    return EmbeddingTable(tuple(ids), _normalize_rows(ids, vectors))


def propagate_embeddings(g: Graph, dim: int = 64, layers: int = 2, seed: int = 42,
                         features: Optional[np.ndarray] = None) -> EmbeddingTable:
    """Untrained graph-convolution embeddings.

    Initial features are standard normal draws from ``numpy.random.default_rng(seed)``
    (or ``features`` if given, rows in sorted node-id order). Each layer applies
    ``D^-1/2 (A + I) D^-1/2`` of the undirected skeleton; the result is
    L2-normalised.
    """
    if dim < 1 or layers < 0:
        raise DomainError("need dim >= 1 and layers >= 0")
    ids = tuple(g.sorted_ids())
    V = len(ids)
    if features is None:
        x = np.random.default_rng(seed).standard_normal((V, dim))
    else:
        x = np.array(features, dtype=float)
        if x.shape != (V, dim):
            raise DomainError(f"features must have shape {(V, dim)}, got {x.shape}")
    if layers:
        index = {nid: i for i, nid in enumerate(ids)}
        r = [index[e.source] for e in g.edges]
        c = [index[e.target] for e in g.edges]
        adj = sp.coo_matrix((np.ones(len(r)), (r, c)), shape=(V, V)).tocsr()
        adj = ((adj + adj.T + sp.identity(V, format="csr")) > 0).astype(float)
        deg = np.asarray(adj.sum(axis=1)).ravel()
        d = sp.diags(1.0 / np.sqrt(deg))
        prop = (d @ adj @ d).tocsr()
        for _ in range(layers):
            x = prop @ x
    return EmbeddingTable(ids, _normalize_rows(ids, x))


def normalized_distance(t: EmbeddingTable, i, j) -> float:
    """Euclidean distance of the unit vectors divided by 2, so it lies in [0, 1]."""
    d = float(np.linalg.norm(t.vector(i) - t.vector(j))) / 2.0
    return min(d, 1.0)
