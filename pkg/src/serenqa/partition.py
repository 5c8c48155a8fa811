"""Greedy pairwise-swap optimisation of answer partitions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Mapping, Optional, Sequence

from .errors import DomainError, ScorerError
from .rns import AnswerPartition

TOLERANCE = 1e-12
MAX_ENUMERATION = 10**6


def budget(candidate_count: int) -> int:
    """Serendipity-set size: 20% of the candidates, at least one."""
    if candidate_count < 1:
        raise DomainError("budget needs at least one candidate")
    return max(1, candidate_count // 5)


def initial_partition(candidates: Sequence, b: int, strategy: str = "suffix",
                      scores: Optional[Mapping] = None) -> AnswerPartition:
    """Starting partition: the last ``b`` candidates, or the top-``b`` by ``scores``."""
    cands = list(candidates)
    if len(set(cands)) != len(cands):
        raise DomainError("candidates must be distinct")
    if not 1 <= b <= len(cands) - 1:
        raise DomainError(f"budget {b} out of range for {len(cands)} candidates")
    if strategy == "suffix":
        chosen = cands[-b:]
    elif strategy == "ranked":
        if scores is None:
            raise DomainError("ranked initialisation needs scores")
        order = sorted(range(len(cands)), key=lambda i: (-float(scores[cands[i]]), i))
        chosen = [cands[i] for i in sorted(order[:b])]
    else:
        raise DomainError(f"unknown initialisation {strategy!r}")
    picked = set(chosen)
    return AnswerPartition(tuple(c for c in cands if c not in picked), tuple(chosen))


@dataclass
class SwapState:
    partition: AnswerPartition
    tau: float
    iterations: int = 0
    trace: list = field(default_factory=list)


def _score(scorer, part):
    try:
        return float(scorer(part))
    except Exception as exc:  # re-raised with the partition attached
        raise ScorerError(f"scorer failed on {part.to_json()}: {exc}", part) from exc


def greedy_swap(init: AnswerPartition, scorer: Callable[[AnswerPartition], float],
                tol: float = TOLERANCE, max_iterations: Optional[int] = None) -> SwapState:
    """Hill-climb over single (existing, serendipity) exchanges.

    Each round scans every pair, applies the best one if it improves the
    score by more than ``tol`` and stops otherwise. Ties go to the
    lexicographically smallest (i, j). ``trace`` holds one dict per accepted
    swap.
    """
    part = init
    tau = _score(scorer, part)
    state = SwapState(part, tau)
    while max_iterations is None or state.iterations < max_iterations:
        best = None
        for i in sorted(part.existing):
            for j in sorted(part.serendipity):
                delta = _score(scorer, part.swapped(i, j)) - tau
                if best is None or delta > best[0]:
                    best = (delta, i, j)
        if best is None or best[0] <= tol:
            break
        delta, i, j = best
        part = part.swapped(i, j)
        tau = _score(scorer, part)
        state.iterations += 1
        state.partition, state.tau = part, tau
        state.trace.append({"iteration": state.iterations, "swapped": {"i": i, "j": j},
                            "delta": delta, "tau": tau})
    return state


def brute_force_partition(candidates: Sequence, b: int,
                          scorer: Callable[[AnswerPartition], float]) -> SwapState:
    """Exhaustive optimum over all size-``b`` serendipity sets.

    Ties go to the lexicographically least sorted serendipity tuple.
    """
    cands = list(candidates)
    if not 1 <= b <= len(cands) - 1:
        raise DomainError(f"budget {b} out of range for {len(cands)} candidates")
    total = math.comb(len(cands), b)
    if total > MAX_ENUMERATION:
        raise DomainError(f"refusing to enumerate {total} partitions (limit {MAX_ENUMERATION})")
    best = None
    for combo in combinations(sorted(cands), b):
        picked = set(combo)
        part = AnswerPartition(tuple(c for c in cands if c not in picked), combo)
        score = _score(scorer, part)
        if best is None or score > best[0] or (score == best[0] and combo < best[1]):
            best = (score, combo, part)
    return SwapState(best[2], best[0], iterations=total)
