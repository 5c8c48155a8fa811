import json

import pytest

from serenqa.errors import NotFoundError, ParseError, ValidationError
from serenqa.kg import (Edge, Graph, NodeRef, dump_edges, edge_key_string, load_benchmark,
                        load_edges, neighbors, parse_edge_lines, parse_path_string,
                        parse_record, path_endpoints, relation_types)


def test_parse_basic_and_parallel_edges():
    g = parse_edge_lines(["a\tT\tr\tb\tT", "a\tT\tr\tb\tT\t0.5", "# comment", "", "b\tT\ts\tc\tU\t\tx=1;y=low"])
    assert g.V == 3 and g.E == 3
    assert len(g.edges_between("a", "r", "b")) == 2
    assert g.node("c").type == "U"
    e = [x for x in g.edges if x.relation == "s"][0]
    assert e.attributes == {"x": "1", "y": "low"} and e.score is None


def test_conflicting_type_rejected():
    with pytest.raises(ValidationError):
        parse_edge_lines(["a\tT\tr\tb\tT", "b\tU\tr\tc\tT"])


def test_bad_lines_report_line_number():
    with pytest.raises(ParseError) as exc:
        parse_edge_lines(["a\tT\tr\tb\tT", "a\tT\tr"])
    assert exc.value.line == 2
    with pytest.raises(ValidationError, match="line 1"):
        parse_edge_lines(["a\tT\tr\tb\tT\t1.5"])


def test_node_lines_and_isolated_nodes(tmp_path):
    g = parse_edge_lines(["node:\tz\tT\tZed", "a\tT\tr\tb\tT\t0.25\tk=v"])
    assert "z" in g and g.node("z").name == "Zed"
    path = tmp_path / "g.tsv"
    dump_edges(g, path)
    back = load_edges(path)
    assert back.nodes == g.nodes
    assert [x.key for x in back.edges] == [x.key for x in g.edges]
    assert back.edges[0].score == 0.25 and back.edges[0].attributes == {"k": "v"}


def test_adjacency_and_lookup(g4):
    assert [e.target for e in neighbors(g4, "a")] == ["b", "c"]
    assert [e.source for e in neighbors(g4, "d", "in")] == ["b", "c"]
    assert relation_types(g4, "a") == ["r"]
    with pytest.raises(NotFoundError):
        g4.node("zz")


def test_without_edges_drops_parallel_copies():
    g = parse_edge_lines(["a\tT\tr\tb\tT", "a\tT\tr\tb\tT", "a\tT\ts\tb\tT"])
    h = g.without_edges({("a", "r", "b")})
    assert h.E == 1 and h.V == 2


def test_edge_key_string(g4):
    e = g4.edges[0]
    assert edge_key_string(g4, e) == "rel:a:T:r:b:T"


def test_record_parsing(qid800):
    _, rec = qid800
    assert rec.qid == 800 and rec.pattern_type == 9
    assert set(rec.answers) == {"P29474", "P07900"}
    assert rec.partition("sscore").serendipity_set == ("P07900",)
    assert set(rec.partitions) == {"llm", "sscore", "expert"}
    with pytest.raises(NotFoundError):
        rec.partition("nope")


def test_record_overlap_cites_qid():
    obj = {"qid": 5, "x": {"exact_matches": ["a"], "serendipity_set": {"list": ["a"]}}}
    with pytest.raises(ValidationError, match="qid 5"):
        parse_record(obj)


def test_benchmark_stream(tmp_path):
    p = tmp_path / "b.json"
    p.write_text(json.dumps({"qid": 1}) + "\n" + json.dumps({"qid": 2}))
    assert [r.qid for r in load_benchmark(p)] == [1, 2]


def test_path_strings():
    assert path_endpoints("A--R--m:T--S--B") == ("A", "B")
    assert parse_path_string("A--R--B") == ["A", "R", "B"]
    with pytest.raises(ParseError, match="A--R"):
        parse_path_string("A--R")
