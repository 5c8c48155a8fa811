"""Policy-guided beam exploration from a root entity.

Each level offers the frontier's outgoing relation types to a policy, keeps
the best-scored (or, with no scoring signal, a seeded random sample of)
candidate edges, pools the candidates of all frontier nodes and lets the
policy pick at most ``n`` new nodes. Visited nodes are never offered again.

A policy is any object with ``decide(request: dict) -> dict``; request and
response dicts follow the JSON wire format used by :class:`ExternalPolicy`.
"""
from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from typing import Optional, Protocol

import numpy as np

from .errors import DomainError, ExplorationError, NotFoundError, PolicyTransportError
from .kg import Edge, Graph, neighbors

log = logging.getLogger(__name__)

DECISION_KINDS = ("select_relations", "select_nodes", "should_continue", "summarize")

# expression-style categorical levels seen in edge attributes
CATEGORICAL_LEVELS = {"high": 1.0, "medium": 0.5, "low": 0.25, "not detected": 0.0}


@dataclass(frozen=True)
class BeamParams:
    n: int = 30
    m: int = 3
    k: int = 10
    h: int = 3
    context_mode: str = "with"
    seed: int = 42

    def __post_init__(self):
        for name in ("n", "m", "k", "h"):
            if getattr(self, name) < 1:
                raise DomainError(f"beam parameter {name} must be >= 1")
        if self.context_mode not in ("with", "without"):
            raise DomainError(f"context_mode must be 'with' or 'without', got {self.context_mode!r}")


@dataclass
class ExplorationTrace:
    root: str
    question: str
    params: BeamParams
    paths: dict = field(default_factory=dict)  # node id -> list of (s, r, t)
    summaries: dict = field(default_factory=dict)  # level -> text
    visited: set = field(default_factory=set)
    leaf_depth: int = 0
    leaves: list = field(default_factory=list)  # [{"id", "type"}]
    warnings: list = field(default_factory=list)
    sampling_seed: int = 0

    @property
    def leaf_ids(self) -> set:
        return {leaf["id"] for leaf in self.leaves}

    def to_json(self) -> dict:
        return {
            "root": self.root,
            "question": self.question,
            "params": asdict(self.params),
            "paths": {nid: [list(t) for t in p] for nid, p in sorted(self.paths.items())},
            "summaries": {str(lvl): txt for lvl, txt in sorted(self.summaries.items())},
            "leaves": sorted(self.leaves, key=lambda x: x["id"]),
            "leaf_depth": self.leaf_depth,
            "visited": sorted(self.visited),
            "warnings": list(self.warnings),
            "sampling_seed": self.sampling_seed,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)


class Policy(Protocol):
    def decide(self, request: dict) -> dict: ...


# --------------------------------------------------------------------------
# edge scoring

class EdgeScorer:
    """Scores edges from their stored confidence or their attributes.

    Numeric attributes are min-max normalised over the values observed in
    the graph (a constant attribute normalises to 1). Recognised categorical
    levels map onto fixed values. The score is the mean over recognised
    attributes, or ``None`` when the edge carries no signal.
    """

    def __init__(self, g: Optional[Graph] = None):
        self.ranges: dict[str, tuple[float, float]] = {}
        if g is not None:
            for e in g.edges:
                for key, val in e.attributes.items():
                    x = _as_number(val)
                    if x is None:
                        continue
                    lo, hi = self.ranges.get(key, (x, x))
                    self.ranges[key] = (min(lo, x), max(hi, x))

    def __call__(self, e: Edge) -> Optional[float]:
        if e.score is not None:
            return float(e.score)
        values = []
        for key, val in sorted(e.attributes.items()):
            level = CATEGORICAL_LEVELS.get(str(val).strip().lower())
            if level is not None:
                values.append(level)
                continue
            x = _as_number(val)
            if x is None:
                continue
            lo, hi = self.ranges.get(key, (x, x))
            values.append(1.0 if hi == lo else (x - lo) / (hi - lo))
        return float(np.mean(values)) if values else None


def _as_number(val) -> Optional[float]:
    try:
        x = float(val)
    except (TypeError, ValueError):
        return None
    return x if math.isfinite(x) else None


def score_edge(e: Edge, g: Optional[Graph] = None) -> Optional[float]:
    """Score of a single edge; attribute ranges come from ``g`` when given."""
    return EdgeScorer(g)(e)


# --------------------------------------------------------------------------
# policies

def format_path(path) -> str:
    if not path:
        return ""
    parts = [path[0][0]]
    for s, r, t in path:
        parts.append(f"-[{r}]-> {t}")
    return " ".join(parts)


class HeuristicPolicy:
    """Deterministic stand-in for a language-model policy."""

    def __init__(self, seed: int = 42):
        self.seed = seed

    def decide(self, request: dict) -> dict:
        kind = request["kind"]
        limits = request.get("limits", {})
        offered = request.get("offered", [])
        if kind == "select_relations":
            ranked = sorted(offered, key=lambda o: (-_score_key(o.get("max_score")),
                                                    o.get("global_frequency", 0), o["relation"]))
            return {"kind": kind, "selection": [o["relation"] for o in ranked[:limits.get("m", 3)]]}
        if kind == "select_nodes":
            ranked = sorted(offered, key=lambda o: (-_score_key(o.get("score")), o["target"]))
            return {"kind": kind, "selection": [o["target"] for o in ranked[:limits.get("n", 30)]]}
        if kind == "should_continue":
            go = request.get("level", 0) < limits.get("h", 3)
            return {"kind": kind, "continue": go,
                    "rationale": "depth budget remains" if go else "depth budget exhausted"}
        if kind == "summarize":
            lines = [f"Level {request.get('level')} from {request.get('root')}:"]
            lines += [format_path(p) for p in request.get("paths", [])]
            return {"kind": kind, "text": "\n".join(lines)}
        raise DomainError(f"unknown decision kind {kind!r}")


def _score_key(x) -> float:
    return -1.0 if x is None else float(x)


class PathPolicy(HeuristicPolicy):
    """Follows a fixed set of relation paths; handy as an oracle in tests and demos.

    ``paths`` are lists of (source, relation, target) triples; only those
    relations and nodes are selected.
    """

    def __init__(self, paths, seed: int = 42):
        super().__init__(seed)
        self.edges = {tuple(t) for p in paths for t in p}

    def decide(self, request: dict) -> dict:
        kind = request["kind"]
        frontier = set(request.get("frontier", []))
        if kind == "select_relations":
            rels = sorted({r for s, r, t in self.edges if s in frontier}
                          & {o["relation"] for o in request["offered"]})
            return {"kind": kind, "selection": rels}
        if kind == "select_nodes":
            picked = [o["target"] for o in request["offered"]
                      if (o["source"], o["relation"], o["target"]) in self.edges]
            return {"kind": kind, "selection": picked}
        return super().decide(request)


_YES = re.compile(r"^\W*(yes|no)\b", re.IGNORECASE)


def parse_policy_response(kind: str, body) -> dict:
    """Normalise a response body (parsed JSON or raw text) into a decision dict.

    Raises ValueError on anything unusable so the caller can retry.
    """
    if isinstance(body, str):
        text = body.strip()
        try:
            body = json.loads(text)
        except ValueError:
            body = text
    if isinstance(body, dict):
        if body.get("kind", kind) != kind:
            raise ValueError(f"response kind {body.get('kind')!r} does not match {kind!r}")
        if kind in ("select_relations", "select_nodes"):
            sel = body.get("selection")
            if isinstance(sel, str):
                sel = _split_list(sel)
            if not isinstance(sel, list):
                raise ValueError("selection must be a list")
            return {"kind": kind, "selection": [str(x) for x in sel]}
        if kind == "should_continue":
            if isinstance(body.get("continue"), bool):
                return {"kind": kind, "continue": body["continue"],
                        "rationale": str(body.get("rationale", ""))}
            if isinstance(body.get("text"), str):
                return parse_policy_response(kind, body["text"])
            raise ValueError("continue flag missing")
        if kind == "summarize":
            if not isinstance(body.get("text"), str):
                raise ValueError("summary text missing")
            return {"kind": kind, "text": body["text"]}
        raise ValueError(f"unknown kind {kind!r}")
    if isinstance(body, list) and kind in ("select_relations", "select_nodes"):
        return {"kind": kind, "selection": [str(x) for x in body]}
    if isinstance(body, str):
        if kind in ("select_relations", "select_nodes"):
            return {"kind": kind, "selection": _split_list(body)}
        if kind == "should_continue":
            match = _YES.match(body)
            if not match:
                raise ValueError("expected YES or NO")
            rationale = body[match.end():].strip()
            return {"kind": kind, "continue": match.group(1).lower() == "yes", "rationale": rationale}
        if kind == "summarize":
            return {"kind": kind, "text": body}
    raise ValueError("unusable response body")


def _split_list(text: str) -> list:
    return [x.strip().strip("'\"") for x in re.split(r"[,\n]", text) if x.strip()]


class ExternalPolicy:
    """Sends each decision as one JSON POST to ``endpoint``.

    Malformed responses and transport failures are retried up to ``retries``
    extra times; warnings about retries collect in ``warnings``.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0, retries: int = 2, session=None):
        import requests

        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.session = session or requests.Session()
        self._exc = requests.RequestException
        self.warnings: list = []

    def decide(self, request: dict) -> dict:
        kind = request["kind"]
        last = None
        for attempt in range(self.retries + 1):
            try:
                resp = self.session.post(self.endpoint, json=request, timeout=self.timeout)
                resp.raise_for_status()
                try:
                    body = resp.json()
                except ValueError:
                    body = resp.text
                decision = parse_policy_response(kind, body)
                if attempt:
                    self.warnings.append(f"{kind}: succeeded after {attempt} retr{'y' if attempt == 1 else 'ies'} ({last})")
                return decision
            except (self._exc, ValueError) as exc:
                last = f"{type(exc).__name__}: {exc}"
                log.warning("policy request %s failed (attempt %d): %s", kind, attempt + 1, last)
        raise PolicyTransportError(f"{kind} failed after {self.retries + 1} attempts: {last}")


# --------------------------------------------------------------------------
# exploration

def _clamp(selection, allowed, limit, what, warnings, level):
    kept, seen = [], set()
    for x in selection:
        if x not in allowed:
            warnings.append(f"level {level}: dropped unoffered {what} {x!r}")
        elif x in seen:
            continue
        else:
            seen.add(x)
            kept.append(x)
    if len(kept) > limit:
        warnings.append(f"level {level}: truncated {what} selection from {len(kept)} to {limit}")
        kept = kept[:limit]
    return kept


class _Explorer:
    def __init__(self, g, policy, params, root, question, scorer):
        self.g, self.policy, self.p = g, policy, params
        self.scorer = scorer or EdgeScorer(g)
        self.rng = np.random.default_rng(params.seed)
        self.freq = g.relation_frequencies()
        self.trace = ExplorationTrace(root, question, params, sampling_seed=params.seed)
        self.context: list = []

    def ask(self, request: dict) -> dict:
        base = {"question": self.trace.question, "root": self.trace.root,
                "limits": {"n": self.p.n, "m": self.p.m, "k": self.p.k, "h": self.p.h},
                "context": list(self.context) if self.p.context_mode == "with" else []}
        base.update(request)
        try:
            decision = self.policy.decide(base)
        except PolicyTransportError as exc:
            raise ExplorationError(str(exc), trace=self.trace) from exc
        extra = getattr(self.policy, "warnings", None)
        if extra:
            self.trace.warnings.extend(extra)
            extra.clear()
        if not isinstance(decision, dict) or decision.get("kind", request["kind"]) != request["kind"]:
            raise ExplorationError(f"policy returned an invalid {request['kind']} decision",
                                   trace=self.trace)
        return decision

    def candidates_for(self, u, level):
        """Filtered candidate edges out of frontier node ``u``, best first."""
        trace = self.trace
        out = [e for e in neighbors(self.g, u) if e.target not in trace.visited and e.target != u]
        offers = []
        for rel in sorted({e.relation for e in out}):
            scores = [self.scorer(e) for e in out if e.relation == rel]
            known = [s for s in scores if s is not None]
            offers.append({"relation": rel, "max_score": max(known) if known else None,
                           "edge_count": len(scores), "global_frequency": self.freq.get(rel, 0)})
        if not offers:
            return []
        decision = self.ask({"kind": "select_relations", "level": level, "frontier": [u],
                             "offered": offers})
        chosen = set(_clamp(decision.get("selection", []), {o["relation"] for o in offers},
                            self.p.m, "relation", trace.warnings, level))
        # one edge per target: the best-scored, then lowest relation label
        best: dict[str, tuple] = {}
        for e in out:
            if e.relation not in chosen:
                continue
            s = self.scorer(e)
            s = -1.0 if s is None else s
            cur = best.get(e.target)
            if cur is None or (-s, e.relation) < (-cur[0], cur[1].relation):
                best[e.target] = (s, e)
        cands = sorted(best.values(), key=lambda x: (-x[0], x[1].relation, x[1].target))
        if not cands:
            return []
        if all(s == -1.0 for s, _ in cands):
            size = min(self.p.k, len(cands))
            idx = sorted(self.rng.choice(len(cands), size=size, replace=False).tolist())
            return [cands[i] for i in idx]
        return cands[:self.p.k]

    def run(self) -> ExplorationTrace:
        g, p, trace = self.g, self.p, self.trace
        root = trace.root
        trace.paths[root] = []
        trace.visited.add(root)
        frontier = [root]
        for level in range(1, p.h + 1):
            trace.leaf_depth = level
            pooled, seen = [], set()
            for u in frontier:
                for s, e in self.candidates_for(u, level):
                    if e.target in seen:
                        continue
                    seen.add(e.target)
                    pooled.append((s, e))
            if not pooled:
                break
            offers = [{"source": e.source, "relation": e.relation, "target": e.target,
                       "target_type": g.nodes[e.target].type, "score": None if s == -1.0 else s}
                      for s, e in pooled]
            decision = self.ask({"kind": "select_nodes", "level": level, "frontier": list(frontier),
                                 "offered": offers})
            picked = _clamp(decision.get("selection", []), {e.target for _, e in pooled},
                            p.n, "node", trace.warnings, level)
            by_target = {e.target: e for _, e in pooled}
            frontier = []
            for t in picked:
                e = by_target[t]
                trace.paths[t] = trace.paths[e.source] + [e.key]
                trace.visited.add(t)
                frontier.append(t)
            if p.context_mode == "with" and frontier:
                self.context.append(self.summarize(level))
            if not frontier:
                break
            if level < p.h:
                go = self.ask({"kind": "should_continue", "level": level, "frontier": list(frontier),
                               "paths": [trace.paths[t] for t in frontier]})
                if not go.get("continue", False):
                    break
        for level in range(1, trace.leaf_depth + 1):
            trace.summaries[level] = self.summarize(level)
        parents = {path[-1][0] for path in trace.paths.values() if path}
        trace.leaves = [{"id": nid, "type": g.nodes[nid].type}
                        for nid in sorted(trace.paths) if nid != root and nid not in parents]
        return trace

    def summarize(self, level: int) -> str:
        paths = [self.trace.paths[nid] for nid in sorted(self.trace.paths)
                 if len(self.trace.paths[nid]) == level]
        decision = self.ask({"kind": "summarize", "level": level, "paths": paths})
        return str(decision.get("text", ""))


def beam_explore(g: Graph, policy: Policy, params: Optional[BeamParams] = None, root: str = "",
                 question: str = "", scorer: Optional[EdgeScorer] = None) -> ExplorationTrace:
    """Explore from ``root``; see the module docstring for the level loop.

    ``paths`` maps every reached node to its triple path from the root,
    ``leaves`` are reached nodes not extended further, and ``leaf_depth`` is
    the last level processed. A policy transport failure raises
    :class:`ExplorationError` carrying the partial trace.
    """
    if root not in g:
        raise NotFoundError(f"root {root!r} is not in the graph")
    return _Explorer(g, policy, params or BeamParams(), root, question, scorer).run()
