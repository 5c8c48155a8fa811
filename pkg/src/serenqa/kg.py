"""Typed directed multigraph and benchmark records.

Edge files are line-oriented, tab separated::

    source_id  source_type  relation_type  target_id  target_type  [score]  [k=v;k=v]

Lines starting with ``node:`` declare a node explicitly (useful for names and
isolated nodes)::

    node:  id  type  [name]

Blank lines and lines starting with ``#`` are ignored.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .errors import NotFoundError, ParseError, ValidationError

OUT = "out"
IN = "in"


@dataclass(frozen=True)
class NodeRef:
    id: str
    type: str
    name: Optional[str] = None


@dataclass(frozen=True)
class Edge:
    source: str
    relation: str
    target: str
    score: Optional[float] = None
    attributes: Mapping[str, str] = field(default_factory=dict, hash=False)

    @property
    def key(self) -> tuple:
        """``(source, relation, target)``; parallel edges share a key."""
        return (self.source, self.relation, self.target)

    def sort_key(self):
        return (self.relation, self.target, self.source,
                -1.0 if self.score is None else self.score,
                tuple(sorted(self.attributes.items())))


class Graph:
    """Immutable directed multigraph with typed nodes.

    Parallel edges and self-loops are allowed. Adjacency lists are kept in a
    deterministic order (relation, then target id) so that every traversal
    built on top of them is reproducible.
    """

    def __init__(self, nodes: Iterable[NodeRef] = (), edges: Iterable[Edge] = ()):
        self._nodes: dict[str, NodeRef] = {}
        for node in nodes:
            self._add_node(node)
        self._edges: tuple[Edge, ...] = tuple(edges)
        out: dict[str, list[Edge]] = {nid: [] for nid in self._nodes}
        inc: dict[str, list[Edge]] = {nid: [] for nid in self._nodes}
        for e in self._edges:
            if e.source not in self._nodes or e.target not in self._nodes:
                raise ValidationError(f"edge {e.key} references an undeclared node")
            if e.score is not None and not 0.0 <= e.score <= 1.0:
                raise ValidationError(f"edge {e.key} score {e.score} outside [0, 1]")
            out[e.source].append(e)
            inc[e.target].append(e)
        self._out = {k: tuple(sorted(v, key=Edge.sort_key)) for k, v in out.items()}
        self._in = {k: tuple(sorted(v, key=lambda e: (e.relation, e.source, e.target)))
                    for k, v in inc.items()}

    def _add_node(self, node: NodeRef):
        if not node.id:
            raise ValidationError("node id must be nonempty")
        prev = self._nodes.get(node.id)
        if prev is not None:
            if prev.type != node.type:
                raise ValidationError(
                    f"node {node.id!r} declared with types {prev.type!r} and {node.type!r}")
            if node.name and not prev.name:
                self._nodes[node.id] = node
            return
        self._nodes[node.id] = node

    @property
    def nodes(self) -> Mapping[str, NodeRef]:
        return self._nodes

    @property
    def edges(self) -> tuple[Edge, ...]:
        return self._edges

    @property
    def V(self) -> int:
        return len(self._nodes)

    @property
    def E(self) -> int:
        return len(self._edges)

    @property
    def node_types(self) -> frozenset:
        return frozenset(n.type for n in self._nodes.values())

    def __contains__(self, node_id) -> bool:
        return node_id in self._nodes

    def __repr__(self):
        return f"Graph(V={self.V}, E={self.E})"

    def node(self, node_id: str) -> NodeRef:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise NotFoundError(f"unknown node {node_id!r}") from None

    def sorted_ids(self) -> list[str]:
        return sorted(self._nodes)

    def has_edge(self, source, relation, target) -> bool:
        return any(e.relation == relation and e.target == target
                   for e in self._out.get(source, ()))

    def edges_between(self, source, relation, target) -> list[Edge]:
        return [e for e in self._out.get(source, ())
                if e.relation == relation and e.target == target]

    def without_edges(self, keys: Iterable[tuple]) -> "Graph":
        """New graph with every edge whose ``(source, relation, target)`` is in ``keys`` removed.

        All parallel copies of a removed key go; nodes are kept.
        """
        drop = set(keys)
        return Graph(self._nodes.values(), (e for e in self._edges if e.key not in drop))

    def relation_frequencies(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for e in self._edges:
            counts[e.relation] = counts.get(e.relation, 0) + 1
        return counts


def neighbors(g: Graph, node: str, direction: str = OUT) -> list[Edge]:
    """Edges incident to ``node``, sorted by relation then opposite endpoint id."""
    g.node(node)
    if direction == OUT:
        return list(g._out[node])
    if direction == IN:
        return list(g._in[node])
    raise ValueError(f"direction must be 'out' or 'in', got {direction!r}")


def relation_types(g: Graph, node: str) -> list[str]:
    """Distinct outgoing relation labels of ``node``, sorted."""
    return sorted({e.relation for e in neighbors(g, node, OUT)})


# --------------------------------------------------------------------------
# edge file format

def _parse_attributes(text: str, lineno: int) -> dict[str, str]:
    attrs = {}
    for item in text.split(";"):
        if not item:
            continue
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ParseError(f"malformed attribute {item!r}", lineno)
        attrs[key] = value
    return attrs


def parse_edge_lines(lines: Iterable[str]) -> Graph:
    nodes: list[NodeRef] = []
    edges: list[Edge] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if cols[0] == "node:":
            if len(cols) not in (3, 4) or not cols[1] or not cols[2]:
                raise ParseError("node line needs 'node:', id, type and optional name", lineno)
            nodes.append(NodeRef(cols[1], cols[2], cols[3] if len(cols) == 4 and cols[3] else None))
            continue
        if len(cols) < 5 or len(cols) > 7:
            raise ParseError(f"expected 5 to 7 tab-separated columns, got {len(cols)}", lineno)
        src, src_type, rel, tgt, tgt_type = cols[:5]
        if not (src and src_type and rel and tgt and tgt_type):
            raise ParseError("empty id, type or relation column", lineno)
        extra = cols[5:]
        score = None
        attrs: dict[str, str] = {}
        if len(extra) == 1 and "=" in extra[0]:
            attrs = _parse_attributes(extra[0], lineno)
        elif extra:
            if extra[0] != "":
                try:
                    score = float(extra[0])
                except ValueError:
                    raise ParseError(f"score {extra[0]!r} is not a number", lineno) from None
                if not 0.0 <= score <= 1.0:
                    raise ValidationError(f"line {lineno}: score {extra[0]} outside [0, 1]")
            if len(extra) == 2:
                attrs = _parse_attributes(extra[1], lineno)
        nodes.append(NodeRef(src, src_type))
        nodes.append(NodeRef(tgt, tgt_type))
        edges.append(Edge(src, rel, tgt, score, attrs))
    return Graph(nodes, edges)


def load_edges(path) -> Graph:
    """Load a graph from an edge file; nodes are induced from edge endpoints."""
    with open(path, encoding="utf-8") as fh:
        return parse_edge_lines(fh)


def format_edge(g: Graph, e: Edge) -> str:
    cols = [e.source, g.nodes[e.source].type, e.relation, e.target, g.nodes[e.target].type]
    if e.score is not None or e.attributes:
        cols.append("" if e.score is None else repr(e.score))
    if e.attributes:
        cols.append(";".join(f"{k}={v}" for k, v in sorted(e.attributes.items())))
    return "\t".join(cols)


def dump_edges(g: Graph, path) -> None:
    """Write ``g`` in the edge format; ``load_edges`` reads it back unchanged."""
    touched = {e.source for e in g.edges} | {e.target for e in g.edges}
    with open(path, "w", encoding="utf-8") as fh:
        for nid in g.sorted_ids():
            node = g.nodes[nid]
            if node.name or nid not in touched:
                cols = ["node:", nid, node.type] + ([node.name] if node.name else [])
                fh.write("\t".join(cols) + "\n")
        for e in g.edges:
            fh.write(format_edge(g, e) + "\n")


def edge_key_string(g: Graph, e: Edge) -> str:
    """Storage key ``rel:{source_id}:{source_type}:{relation}:{target_id}:{target_type}``."""
    return (f"rel:{e.source}:{g.nodes[e.source].type}:{e.relation}:"
            f"{e.target}:{g.nodes[e.target].type}")


# --------------------------------------------------------------------------
# benchmark records

@dataclass
class StrategyPartition:
    exact_matches: tuple[str, ...]
    serendipity_set: tuple[str, ...]
    explore_paths: tuple[str, ...] = ()
    split: Optional[str] = None


@dataclass
class QaRecord:
    qid: int
    question: str
    graph_query: Optional[dict]
    answers: dict[str, Optional[str]]
    pattern_type: Optional[int]
    partitions: dict[str, StrategyPartition]
    commonness: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def partition(self, strategy: str) -> StrategyPartition:
        try:
            return self.partitions[strategy]
        except KeyError:
            raise NotFoundError(f"qid {self.qid} has no strategy {strategy!r}") from None


_RECORD_KEYS = {"qid", "question", "answer", "graph_query", "pattern_type", "commonness"}


def _id_list(obj) -> tuple[str, ...]:
    if obj is None:
        return ()
    if isinstance(obj, dict):
        obj = obj.get("list") or []
    return tuple(str(x) for x in obj)


def parse_record(obj: dict) -> QaRecord:
    if "qid" not in obj:
        raise ValidationError("benchmark record without qid")
    qid = int(obj["qid"])
    answers: dict[str, Optional[str]] = {}
    for a in obj.get("answer") or []:
        answers[str(a["answer_argument"])] = a.get("entity_name")
    partitions: dict[str, StrategyPartition] = {}
    extra = {}
    for key, value in obj.items():
        if key in _RECORD_KEYS:
            continue
        if isinstance(value, dict) and ("serendipity_set" in value or "exact_matches" in value):
            exact = _id_list(value.get("exact_matches"))
            seren = _id_list(value.get("serendipity_set"))
            overlap = set(exact) & set(seren)
            if overlap:
                raise ValidationError(
                    f"qid {qid}, strategy {key!r}: exact_matches and serendipity_set "
                    f"overlap on {sorted(overlap)}")
            paths = tuple((value.get("explore_queries") or {}).get("paths") or ())
            partitions[key] = StrategyPartition(exact, seren, paths, value.get("partition"))
        else:
            extra[key] = value
    if answers:
        for name, part in partitions.items():
            outside = (set(part.exact_matches) | set(part.serendipity_set)) - set(answers)
            if outside:
                raise ValidationError(
                    f"qid {qid}, strategy {name!r}: ids {sorted(outside)} not among the answers")
    else:
        for part in partitions.values():
            for x in part.exact_matches + part.serendipity_set:
                answers.setdefault(x, None)
    pattern_type = obj.get("pattern_type")
    commonness = obj.get("commonness")
    return QaRecord(
        qid=qid,
        question=obj.get("question", ""),
        graph_query=obj.get("graph_query"),
        answers=answers,
        pattern_type=None if pattern_type is None else int(pattern_type),
        partitions=partitions,
        commonness=None if commonness is None else float(commonness),
        extra=extra,
    )


def _iter_json_values(text: str) -> Iterator:
    decoder = json.JSONDecoder()
    pos, n = 0, len(text)
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            return
        try:
            value, pos = decoder.raw_decode(text, pos)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
        yield value


def load_benchmark(path) -> list[QaRecord]:
    """Read benchmark records from a JSON array, a single object, or a stream of objects."""
    text = Path(path).read_text(encoding="utf-8")
    records = []
    for value in _iter_json_values(text):
        items = value if isinstance(value, list) else [value]
        for obj in items:
            if not isinstance(obj, dict):
                raise ValidationError("benchmark entries must be JSON objects")
            records.append(parse_record(obj))
    return records


def parse_path_string(path: str) -> list[str]:
    """Split ``src--REL--mid:Type--REL--dst`` into alternating node and relation tokens."""
    tokens = path.split("--")
    if len(tokens) < 3 or len(tokens) % 2 == 0 or any(not t for t in tokens):
        raise ParseError(f"malformed path string {path!r}")
    return tokens


def path_endpoints(path: str) -> tuple[str, str]:
    tokens = parse_path_string(path)
    return tokens[0], tokens[-1]


def records_by_qid(records: Sequence[QaRecord]) -> dict[int, QaRecord]:
    return {r.qid: r for r in records}
