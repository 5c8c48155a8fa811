"""Code-based evaluation metrics and report writing."""
from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from .errors import DomainError, NotFoundError
from .kg import Graph, path_endpoints
from .pattern import PATTERN_BUCKETS


@dataclass(frozen=True)
class RetrievalResult:
    qid: int
    predicted: frozenset
    executed_ok: bool = True
    pattern_type: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "predicted", frozenset(self.predicted))
        if not self.executed_ok and self.predicted:
            raise DomainError(f"qid {self.qid}: a failed execution cannot have predictions")


@dataclass
class MetricReport:
    per_record: dict = field(default_factory=dict)
    mean: float = 0.0
    count: int = 0
    skipped: int = 0

    def to_json(self) -> dict:
        return {"per_record": {str(k): v for k, v in self.per_record.items()},
                "mean": self.mean, "count": self.count, "skipped": self.skipped}


def _truth(truth) -> set:
    truth = set(truth)
    if not truth:
        raise DomainError("ground truth set is empty")
    return truth


def hit_rate(predicted, truth) -> float:
    truth = _truth(truth)
    return len(set(predicted) & truth) / len(truth)


def f1(predicted, truth) -> float:
    truth = _truth(truth)
    predicted = set(predicted)
    hits = len(predicted & truth)
    if not predicted or not hits:
        return 0.0
    precision = hits / len(predicted)
    recall = hits / len(truth)
    return 2 * precision * recall / (precision + recall)


def mentions(text: str, ident: str) -> bool:
    """True if ``ident`` occurs in ``text`` as a whole token.

    Token characters are letters, digits, ``_``, ``:``, ``.`` and ``-``
    so that ids such as ``DOID:0110447`` match only in full.
    """
    pattern = r"(?<![\w:.\-])" + re.escape(ident) + r"(?![\w:\-]|\.\w)"
    return re.search(pattern, text) is not None


def seren_cov(summaries, gt_paths: Sequence[str]) -> float:
    """Fraction of ground-truth paths whose source and target ids both appear in the summaries."""
    ends = [path_endpoints(p) for p in gt_paths]
    if not ends:
        return 0.0
    texts = summaries.values() if isinstance(summaries, Mapping) else summaries
    text = "\n".join(str(t) for t in texts)
    return sum(1 for s, t in ends if mentions(text, s) and mentions(text, t)) / len(ends)


def _leaf_pairs(leaves) -> list:
    out = []
    for leaf in leaves:
        if isinstance(leaf, Mapping):
            out.append((leaf["id"], leaf.get("type")))
        else:
            out.append(tuple(leaf))
    return out


def type_match(leaves, truth, g: Graph) -> int:
    truth_types = set()
    for t in truth:
        if t not in g:
            raise NotFoundError(f"ground-truth id {t!r} is not in the graph")
        truth_types.add(g.nodes[t].type)
    return int(any(ty in truth_types for _, ty in _leaf_pairs(leaves)))


def seren_hit(leaves, truth) -> int:
    truth = set(truth)
    return int(any(i in truth for i, _ in _leaf_pairs(leaves)))


def pearson(xs, ys) -> float:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise DomainError("pearson needs two sequences of equal length >= 2")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DomainError("correlation is undefined for a constant sequence")
    return float(np.clip(stats.pearsonr(x, y)[0], -1.0, 1.0))


def _is_rational(value) -> bool:
    if value is None or isinstance(value, BaseException):
        return False
    try:
        return math.isfinite(float(value))
    except (TypeError, ValueError):
        return False


def aggregate(values: Mapping, rationality: Optional[Callable] = None) -> MetricReport:
    """Mean over the rational samples only; the rest are counted as skipped."""
    check = rationality or _is_rational
    kept = {k: float(v) for k, v in values.items() if check(v)}
    skipped = len(values) - len(kept)
    if not kept:
        raise DomainError("no rational samples to aggregate")
    return MetricReport(kept, sum(kept.values()) / len(kept), len(kept), skipped)


def executability(results: Iterable[RetrievalResult]) -> dict:
    """Fraction of error-free executions, overall and per pattern bucket."""
    buckets: dict[str, list] = {}
    for r in results:
        buckets.setdefault("all", []).append(r.executed_ok)
        label = PATTERN_BUCKETS.get(r.pattern_type, "unknown")
        buckets.setdefault(label, []).append(r.executed_ok)
    return {k: sum(v) / len(v) for k, v in sorted(buckets.items())}


def pearson_matrix(per_strategy: Mapping[str, Mapping]) -> dict:
    """Pairwise correlation of per-record values over the records all strategies share.

    Undefined correlations (constant series, fewer than two records) are ``None``.
    """
    names = sorted(per_strategy)
    common = None
    for n in names:
        keys = {k for k, v in per_strategy[n].items() if _is_rational(v)}
        common = keys if common is None else common & keys
    common = sorted(common or [], key=str)
    out: dict = {}
    for a in names:
        out[a] = {}
        for b in names:
            try:
                out[a][b] = pearson([per_strategy[a][q] for q in common],
                                    [per_strategy[b][q] for q in common])
            except DomainError:
                out[a][b] = None
    return out


def write_json_report(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_csv_report(rows: Iterable[Mapping], path) -> None:
    """One row per (strategy, qid, metric)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["strategy", "qid", "metric", "value"])
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k) for k in ("strategy", "qid", "metric", "value")})
