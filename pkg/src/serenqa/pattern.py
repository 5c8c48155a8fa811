"""Conjunctive graph-pattern queries and evaluation-graph construction.

A pattern is a small graph of pattern nodes (a class variable or a bound
entity) joined by relation-labelled edges. Matching is a homomorphism: every
pattern edge must be realised by at least one graph edge with the same label
between the bound endpoints, and two pattern nodes may bind the same entity.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import InfeasibleSplitError, UnsupportedPatternError, ValidationError
from .kg import Graph

# pattern_type tag -> taxonomy label
PATTERN_TYPES = {1: "1.1", 2: "1.2", 3: "2.1", 4: "3.1", 5: "3.2", 6: "3.3",
                 7: "4.1", 8: "4.2", 9: "4.3"}
PATTERN_BUCKETS = {1: "one-hop", 2: "one-hop", 3: "two-hop", 4: "multi-hop",
                   5: "multi-hop", 6: "multi-hop", 7: "intersection",
                   8: "intersection", 9: "intersection"}


@dataclass(frozen=True)
class PatternNode:
    nid: int
    kind: str  # "class" or "entity"
    label: Optional[str]
    entity_id: Optional[str] = None
    name: Optional[str] = None
    question_node: bool = False


@dataclass(frozen=True)
class PatternEdge:
    start: int
    end: int
    relation: str


@dataclass
class PatternQuery:
    nodes: tuple[PatternNode, ...]
    edges: tuple[PatternEdge, ...]
    pattern_type: Optional[int] = None

    def __post_init__(self):
        nids = [n.nid for n in self.nodes]
        if len(set(nids)) != len(nids):
            raise ValidationError("duplicate nid in pattern")
        if not any(n.question_node for n in self.nodes):
            raise ValidationError("pattern has no question node")
        known = set(nids)
        for e in self.edges:
            if e.start not in known or e.end not in known:
                raise ValidationError(f"pattern edge {e} references an undeclared nid")

    @classmethod
    def from_json(cls, obj: dict, pattern_type: Optional[int] = None) -> "PatternQuery":
        """Build from a benchmark ``graph_query`` object.

        The relation label matched against the graph is the edge's
        ``friendly_name`` (e.g. ``ASSOCIATED_WITH``); ``relation`` holds a
        ``Src.Tgt`` class pair in the benchmark and is only a fallback.
        """
        nodes = []
        for n in obj["nodes"]:
            kind = n.get("node_type", "class")
            if kind not in ("class", "entity"):
                raise ValidationError(f"unknown node_type {kind!r}")
            nodes.append(PatternNode(
                nid=int(n["nid"]),
                kind=kind,
                label=n.get("class"),
                entity_id=str(n["id"]) if kind == "entity" else None,
                name=n.get("friendly_name"),
                question_node=bool(n.get("question_node")),
            ))
        edges = [PatternEdge(int(e["start"]), int(e["end"]),
                             e.get("friendly_name") or e["relation"])
                 for e in obj["edges"]]
        return cls(tuple(nodes), tuple(edges), pattern_type)

    def question_nids(self) -> list[int]:
        return [n.nid for n in self.nodes if n.question_node]

    def cycle_rank(self) -> int:
        """Independent cycles of the undirected pattern skeleton (E - V + components)."""
        parent = {n.nid: n.nid for n in self.nodes}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for e in self.edges:
            parent[find(e.start)] = find(e.end)
        components = len({find(n.nid) for n in self.nodes})
        return len(self.edges) - len(self.nodes) + components


@dataclass
class AnswerSet:
    entities: dict[str, Optional[str]] = field(default_factory=dict)
    witness_paths: dict[str, list[tuple]] = field(default_factory=dict)

    @property
    def ids(self) -> set[str]:
        return set(self.entities)

    def to_json(self) -> dict:
        return {
            "entities": [{"id": i, "name": self.entities[i]} for i in sorted(self.entities)],
            "witnesses": [{"id": i, "paths": [[list(t) for t in w] for w in self.witness_paths[i]]}
                          for i in sorted(self.witness_paths)],
        }


def _candidates(g: Graph, node: PatternNode) -> list[str]:
    if node.kind == "entity":
        if node.entity_id in g:
            ref = g.nodes[node.entity_id]
            return [ref.id] if node.label is None or ref.type == node.label else []
        # fall back to a name match of the right class, as the benchmark's Cypher does
        if node.name:
            return sorted(n.id for n in g.nodes.values()
                          if n.name == node.name and (node.label is None or n.type == node.label))
        return []
    return sorted(n.id for n in g.nodes.values() if node.label is None or n.type == node.label)


def _bindings(g: Graph, q: PatternQuery):
    """Yield every complete binding nid -> entity id, by backtracking."""
    cands = {n.nid: _candidates(g, n) for n in q.nodes}
    if any(not c for c in cands.values()):
        return
    # join order: smallest candidate set first, then prefer nodes adjacent to bound ones
    order: list[int] = []
    remaining = set(cands)
    adjacency: dict[int, set] = {nid: set() for nid in cands}
    for e in q.edges:
        adjacency[e.start].add(e.end)
        adjacency[e.end].add(e.start)
    while remaining:
        linked = [n for n in remaining if adjacency[n] & set(order)]
        pool = linked or list(remaining)
        nxt = min(pool, key=lambda n: (len(cands[n]), n))
        order.append(nxt)
        remaining.discard(nxt)

    pos = {nid: i for i, nid in enumerate(order)}
    # edges checkable once both endpoints are bound
    checks: dict[int, list[PatternEdge]] = {nid: [] for nid in order}
    for e in q.edges:
        checks[order[max(pos[e.start], pos[e.end])]].append(e)

    cand_sets = {nid: set(c) for nid, c in cands.items()}
    binding: dict[int, str] = {}

    def extend(i):
        if i == len(order):
            yield dict(binding)
            return
        nid = order[i]
        for ent in _step_candidates(g, nid, cands[nid], cand_sets[nid], binding, q):
            binding[nid] = ent
            if all(g.has_edge(binding[e.start], e.relation, binding[e.end]) for e in checks[nid]):
                yield from extend(i + 1)
            del binding[nid]

    yield from extend(0)


def _step_candidates(g, nid, cands, cand_set, binding, q):
    """Narrow a node's candidates through an already-bound neighbour when possible."""
    for e in q.edges:
        if e.end == nid and e.start in binding:
            allowed = {x.target for x in g._out[binding[e.start]] if x.relation == e.relation}
            return sorted(allowed & cand_set)
        if e.start == nid and e.end in binding:
            allowed = {x.source for x in g._in[binding[e.end]] if x.relation == e.relation}
            return sorted(allowed & cand_set)
    return cands


def execute_pattern(g: Graph, q: PatternQuery, max_witnesses: Optional[int] = None) -> AnswerSet:
    """All question-node bindings satisfying every pattern edge, deduplicated by id.

    A bound entity missing from the graph yields an empty result. Patterns
    with more than one independent cycle (beyond the compound-intersection
    form) raise :class:`UnsupportedPatternError`.
    """
    if q.cycle_rank() > 1:
        raise UnsupportedPatternError(
            f"pattern has {q.cycle_rank()} independent cycles; at most one is supported")
    result = AnswerSet()
    qnids = q.question_nids()
    for binding in _bindings(g, q):
        witness = tuple(sorted({(binding[e.start], e.relation, binding[e.end]) for e in q.edges}))
        for nid in qnids:
            ent = binding[nid]
            result.entities.setdefault(ent, g.nodes[ent].name)
            paths = result.witness_paths.setdefault(ent, [])
            if witness not in paths and (max_witnesses is None or len(paths) < max_witnesses):
                paths.append(witness)
    for paths in result.witness_paths.values():
        paths.sort()
    return result


def split_graph(g_c: Graph, q: PatternQuery, existing: Sequence[str], serendipity: Sequence[str]):
    """Remove edges so that ``serendipity`` answers vanish while ``existing`` ones survive.

    For each serendipity answer and each of its witnesses still intact, one
    edge is removed: a last-hop edge (incident to the answer) not used by any
    existing-answer witness when possible, otherwise any witness edge whose
    removal leaves every existing answer with an intact witness. The result
    is verified by re-executing the pattern.

    Returns:
        ``(graph, removed)`` where ``removed`` is the set of removed edge keys.
    """
    existing = list(existing)
    serendipity = list(serendipity)
    if not serendipity:
        return g_c, set()
    answers = execute_pattern(g_c, q)
    missing = [x for x in existing + serendipity if x not in answers.entities]
    if missing:
        raise ValidationError(f"ids {missing} are not answers of the pattern on the input graph")
    existing_set = set(existing)
    protected = {t for a in existing for w in answers.witness_paths[a] for t in w}
    removed: set[tuple] = set()
    conflicted = []

    def existing_survive(extra):
        gone = removed | {extra}
        return all(any(not (set(w) & gone) for w in answers.witness_paths[a]) for a in existing)

    for s in serendipity:
        for w in answers.witness_paths[s]:
            if set(w) & removed:
                continue
            last = sorted(t for t in w if s in (t[0], t[2]))
            others = sorted(t for t in w if t not in last)
            choice = next((t for t in last + others if t not in protected), None)
            if choice is None:
                choice = next((t for t in last + others if existing_survive(t)), None)
            if choice is None:
                conflicted.append(s)
                break
            removed.add(choice)
    if conflicted:
        blockers = sorted({a for a in existing
                           for s in conflicted
                           for w in answers.witness_paths[s]
                           for wa in answers.witness_paths[a] if set(w) <= set(wa)})
        raise InfeasibleSplitError(
            f"cannot hide {sorted(set(conflicted))} without breaking {blockers or existing}",
            conflicted=sorted(set(conflicted)) + blockers)
    g = g_c.without_edges(removed)
    check = execute_pattern(g, q).ids
    if not existing_set <= check or check & set(serendipity):
        raise InfeasibleSplitError(
            "re-execution after edge removal did not separate the partition",
            conflicted=sorted((existing_set - check) | (check & set(serendipity))))
    return g, removed
