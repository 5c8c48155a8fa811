"""Relevance, novelty and surprise of an answer partition, and their weighted sum.

All logarithms are natural. Relevance is the negated mean normalised
embedding distance across existing/serendipity pairs. Novelty is one minus
the mutual information under the k-hop conditional model. Surprise is the
Jensen-Shannon divergence between the two sets' marginal-mass distributions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .embed import EmbeddingTable
from .errors import DegenerateDistributionError, DomainError, ValidationError
from .prob import MarginalVector, TransitionMatrix

JSD_MODES = ("own", "shared")


@dataclass(frozen=True)
class RnsWeights:
    alpha: float = 1 / 3
    beta: float = 1 / 3
    gamma: float = 1 / 3

    def __post_init__(self):
        vals = (self.alpha, self.beta, self.gamma)
        if any(not math.isfinite(v) or v < 0 for v in vals):
            raise DomainError(f"weights must be finite and non-negative, got {vals}")
        total = sum(vals)
        if total <= 0:
            raise DomainError("weights must not all be zero")
        object.__setattr__(self, "alpha", self.alpha / total)
        object.__setattr__(self, "beta", self.beta / total)
        object.__setattr__(self, "gamma", self.gamma / total)

    @classmethod
    def parse(cls, text: str) -> "RnsWeights":
        """Parse ``"a,b,g"``."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise DomainError(f"expected three comma-separated weights, got {text!r}")
        try:
            return cls(*(float(p) for p in parts))
        except ValueError:
            raise DomainError(f"non-numeric weight in {text!r}") from None

    def as_tuple(self) -> tuple:
        return (self.alpha, self.beta, self.gamma)

    def to_json(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma}


@dataclass(frozen=True)
class AnswerPartition:
    existing: tuple
    serendipity: tuple

    def __post_init__(self):
        e, s = tuple(self.existing), tuple(self.serendipity)
        if len(set(e)) != len(e) or len(set(s)) != len(s):
            raise ValidationError("partition sets must not repeat ids")
        overlap = set(e) & set(s)
        if overlap:
            raise ValidationError(f"existing and serendipity sets overlap on {sorted(overlap)}")
        object.__setattr__(self, "existing", e)
        object.__setattr__(self, "serendipity", s)

    @property
    def members(self) -> tuple:
        return self.existing + self.serendipity

    def swapped(self, i, j) -> "AnswerPartition":
        """Move ``i`` from existing to serendipity and ``j`` the other way."""
        e = tuple(j if x == i else x for x in self.existing)
        s = tuple(i if x == j else x for x in self.serendipity)
        return AnswerPartition(e, s)

    def canonical(self) -> tuple:
        return (tuple(sorted(self.existing)), tuple(sorted(self.serendipity)))

    def to_json(self) -> dict:
        return {"existing": list(self.existing), "serendipity": list(self.serendipity)}


@dataclass(frozen=True)
class RnsComponents:
    R: float
    N: float
    S: float
    MI: float
    rns: float
    weights: RnsWeights

    def to_json(self, qid=None) -> dict:
        out = {"R": self.R, "N": self.N, "S": self.S, "MI": self.MI,
               "weights": self.weights.to_json(), "rns": self.rns}
        if qid is not None:
            out["qid"] = qid
        return out


def _require_nonempty(part: AnswerPartition):
    if not part.existing or not part.serendipity:
        raise DomainError("both the existing and the serendipity set must be nonempty")


def relevance(part: AnswerPartition, t: EmbeddingTable) -> float:
    _require_nonempty(part)
    e = np.vstack([t.vector(i) for i in part.existing])
    s = np.vstack([t.vector(j) for j in part.serendipity])
    dists = np.linalg.norm(e[:, None, :] - s[None, :, :], axis=2) / 2.0
    return -float(np.minimum(dists, 1.0).mean())


def mutual_information(part: AnswerPartition, pk: TransitionMatrix, m: MarginalVector) -> float:
    """Sum over i in A_e, j in A_s of P(i) P(j|i) ln(P(j|i) / P(j)).

    The value can be negative when the conditional falls below the marginal;
    it is returned as computed.
    """
    rows = [pk.position(i) for i in part.existing]
    cols = [pk.position(j) for j in part.serendipity]
    cond = pk.matrix[rows][:, cols]
    cond = cond.toarray() if hasattr(cond, "toarray") else np.asarray(cond)
    p_i = np.array([m.prob(i) for i in part.existing])
    p_j = np.array([m.prob(j) for j in part.serendipity])
    total = 0.0
    for a in range(len(rows)):
        for b in range(len(cols)):
            c = float(cond[a, b])
            if c == 0.0:
                continue
            if p_j[b] <= 0.0:
                raise DegenerateDistributionError(
                    f"marginal of {part.serendipity[b]!r} is zero but it is reachable")
            total += float(p_i[a]) * c * math.log(c / float(p_j[b]))
    return float(total)


def novelty(part: AnswerPartition, pk: TransitionMatrix, m: MarginalVector) -> float:
    return 1.0 - mutual_information(part, pk, m)


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def jensen_shannon(p, q) -> float:
    """Jensen-Shannon divergence of two distributions on one support (natural log)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DomainError("distributions must share a support")
    if p.sum() <= 0 or q.sum() <= 0:
        raise DegenerateDistributionError("distribution with zero total mass")
    p = p / p.sum()
    q = q / q.sum()
    mix = 0.5 * (p + q)
    return 0.5 * _kl(p, mix) + 0.5 * _kl(q, mix)


def set_distributions(part: AnswerPartition, m: MarginalVector, mode: str = "own",
                      pk: Optional[TransitionMatrix] = None) -> tuple[np.ndarray, np.ndarray]:
    """(P_s, P_e) over the support ``existing + serendipity``.

    ``own``: each set's marginal masses, zero outside the set.
    ``shared``: each set's own mass plus the mass it sends to every support
    member through ``pk``, so both distributions cover the whole support.
    """
    _require_nonempty(part)
    support = part.members
    n_e = len(part.existing)
    mass = np.array([m.prob(x) for x in support])
    if mode == "own":
        p_e = np.concatenate([mass[:n_e], np.zeros(len(support) - n_e)])
        p_s = np.concatenate([np.zeros(n_e), mass[n_e:]])
    elif mode == "shared":
        if pk is None:
            raise DomainError("shared surprise mode needs the k-hop matrix")
        idx = [pk.position(x) for x in support]
        block = pk.matrix[idx][:, idx]
        block = block.toarray() if hasattr(block, "toarray") else np.asarray(block)
        own_e = np.concatenate([mass[:n_e], np.zeros(len(support) - n_e)])
        own_s = np.concatenate([np.zeros(n_e), mass[n_e:]])
        p_e = own_e + own_e @ block
        p_s = own_s + own_s @ block
    else:
        raise DomainError(f"unknown surprise mode {mode!r}; use one of {JSD_MODES}")
    for name, p in (("serendipity", p_s), ("existing", p_e)):
        if p.sum() <= 0:
            raise DegenerateDistributionError(f"{name} set carries no marginal mass")
    return p_s / p_s.sum(), p_e / p_e.sum()


def surprise(part: AnswerPartition, m: MarginalVector, mode: str = "own",
             pk: Optional[TransitionMatrix] = None) -> float:
    p_s, p_e = set_distributions(part, m, mode, pk)
    return jensen_shannon(p_s, p_e)


def rns_score(part: AnswerPartition, w: RnsWeights, pk: TransitionMatrix, m: MarginalVector,
              t: EmbeddingTable, mode: str = "own") -> RnsComponents:
    r = relevance(part, t)
    mi = mutual_information(part, pk, m)
    n = 1.0 - mi
    s = surprise(part, m, mode, pk)
    return RnsComponents(r, n, s, mi, w.alpha * r + w.beta * n + w.gamma * s, w)


class RnsScorer:
    """Callable partition scorer with memoised components.

    Components are cached by the unordered pair of sets, so repeated
    evaluation during a swap search costs one computation per partition.
    """

    def __init__(self, pk: TransitionMatrix, m: MarginalVector, t: EmbeddingTable,
                 weights: Optional[RnsWeights] = None, mode: str = "own"):
        if mode not in JSD_MODES:
            raise DomainError(f"unknown surprise mode {mode!r}")
        self.pk, self.m, self.t = pk, m, t
        self.weights = weights or RnsWeights()
        self.mode = mode
        self._cache: dict = {}

    def components(self, part: AnswerPartition) -> tuple[float, float, float, float]:
        """(R, N, S, MI) for ``part``."""
        key = part.canonical()
        hit = self._cache.get(key)
        if hit is None:
            p = AnswerPartition(*key)
            r = relevance(p, self.t)
            mi = mutual_information(p, self.pk, self.m)
            s = surprise(p, self.m, self.mode, self.pk)
            hit = (r, 1.0 - mi, s, mi)
            self._cache[key] = hit
        return hit

    def score_with(self, part: AnswerPartition, w: RnsWeights) -> float:
        r, n, s, _ = self.components(part)
        return w.alpha * r + w.beta * n + w.gamma * s

    def __call__(self, part: AnswerPartition) -> float:
        return self.score_with(part, self.weights)

    def report(self, part: AnswerPartition) -> RnsComponents:
        r, n, s, mi = self.components(part)
        w = self.weights
        return RnsComponents(r, n, s, mi, w.alpha * r + w.beta * n + w.gamma * s, w)


def weight_grid(step: float = 0.05) -> list[RnsWeights]:
    """Simplex grid at ``step`` plus the exact uniform vector."""
    steps = round(1 / step)
    if steps < 1 or not math.isclose(steps * step, 1.0):
        raise DomainError(f"grid step must divide 1, got {step}")
    grid = [RnsWeights()]
    for a in range(steps + 1):
        for b in range(steps + 1 - a):
            c = steps - a - b
            grid.append(RnsWeights(a / steps, b / steps, c / steps))
    return grid


def calibrate_weights(records: Sequence, reference_strategy: str, pk: TransitionMatrix,
                      m: MarginalVector, t: EmbeddingTable, step: float = 0.05,
                      mode: str = "own", scorer_factory: Optional[Callable] = None) -> RnsWeights:
    """Weights whose greedy-swap optimum best reproduces the reference serendipity sets.

    For every record with a nonempty reference serendipity set, the candidates
    are the reference partition's members and the budget is the reference
    set's size. Ties in mean overlap go to the uniform vector, then to the
    grid point closest to it.
    """
    from .partition import greedy_swap, initial_partition

    cases = []
    for rec in records:
        ref = rec.partition(reference_strategy)
        if not ref.serendipity_set:
            continue
        cands = sorted(set(ref.exact_matches) | set(ref.serendipity_set))
        cases.append((cands, set(ref.serendipity_set)))
    if not cases:
        raise DomainError("no record has a nonempty reference serendipity set")
    scorer = scorer_factory() if scorer_factory else RnsScorer(pk, m, t, mode=mode)
    uniform = np.full(3, 1 / 3)
    best, best_key = None, None
    for w in weight_grid(step):
        overlaps = []
        for cands, ref_s in cases:
            init = initial_partition(cands, len(ref_s), "suffix")
            state = greedy_swap(init, lambda p, w=w: scorer.score_with(p, w))
            overlaps.append(len(set(state.partition.serendipity) & ref_s) / len(ref_s))
        mean = float(np.mean(overlaps))
        dist = float(np.linalg.norm(np.array(w.as_tuple()) - uniform))
        key = (round(mean, 12), -round(dist, 12))
        if best_key is None or key > best_key:
            best, best_key = w, key
    return best
