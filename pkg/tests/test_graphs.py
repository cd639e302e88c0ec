import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import mk_event
from provhunt.graphs import (
    AttrEdge,
    AttrGraph,
    AttrNode,
    PoiPattern,
    SchemaError,
    graph_from_dict,
    graph_to_dict,
    load_graph,
    load_patterns,
    match_pois,
    patterns_from_dicts,
    poi_entities,
    save_graph,
    to_attr_graph,
)
from provhunt.ppg import Ppg
from provhunt.vocab import AbsType, EdgeOp


def small_graph():
    g = AttrGraph(label="demo")
    p = g.add_node("/usr/bin/bash", AbsType.UTIL_PROCESS)
    f = g.add_node("/etc/passwd", AbsType.CFG_FILE)
    n = g.add_node("10.0.0.5:443", AbsType.PRIVATE_NETFLOW)
    g.add_edge(p, f, EdgeOp.READ, ts=100)
    g.add_edge(p, f, EdgeOp.WRITE, ts=200)  # parallel edge, different op
    g.add_edge(p, n, EdgeOp.SEND)
    return g


class TestSerialization:
    def test_round_trip_identity(self, tmp_path):
        g = small_graph()
        path = tmp_path / "g.json"
        save_graph(g, str(path))
        g2 = load_graph(str(path))
        assert g2 == g

    def test_round_trip_without_label(self):
        g = small_graph()
        g.label = None
        assert graph_from_dict(graph_to_dict(g)) == g

    def test_parallel_edges_preserved(self):
        g = small_graph()
        g2 = graph_from_dict(graph_to_dict(g))
        assert g2.n_edges == 3
        assert {e.op for e in g2.edges if e.src == 0 and e.dst == 1} == {
            EdgeOp.READ,
            EdgeOp.WRITE,
        }

    def test_node_order_independent_of_listing(self):
        doc = graph_to_dict(small_graph())
        doc["nodes"].reverse()  # ids keep meaning regardless of array order
        g = graph_from_dict(doc)
        assert g.nodes[0].name == "/usr/bin/bash"

    def test_annex_keys_tolerated(self):
        doc = graph_to_dict(small_graph())
        doc["annex"] = {"seeds": [0]}
        assert graph_from_dict(doc) == small_graph()

    @pytest.mark.parametrize(
        "mutate,path_prefix",
        [
            (lambda d: d.pop("nodes"), "nodes"),
            (lambda d: d.update(nodes={}), "nodes"),
            (lambda d: d["nodes"][0].pop("name"), "nodes[0].name"),
            (lambda d: d["nodes"][1].update(abs="sysfile"), "nodes[1].abs"),
            (lambda d: d["nodes"][1].update(id=0), "nodes[1].id"),
            (lambda d: d["nodes"][1].update(id=7), "nodes[1].id"),
            (lambda d: d["nodes"][1].update(id=True), "nodes[1].id"),
            (lambda d: d["nodes"][0].update(nmae="x"), "nodes[0].nmae"),
            (lambda d: d["edges"][0].update(src=9), "edges[0].src"),
            (lambda d: d["edges"][2].update(op="sendto"), "edges[2].op"),
            (lambda d: d["edges"][0].update(ts=-1), "edges[0].ts"),
            (lambda d: d["edges"][0].update(weight=2), "edges[0].weight"),
            (lambda d: d.update(label=4), "label"),
        ],
    )
    def test_schema_violation_paths(self, mutate, path_prefix):
        doc = graph_to_dict(small_graph())
        mutate(doc)
        with pytest.raises(SchemaError) as exc:
            graph_from_dict(doc)
        assert str(exc.value).startswith(path_prefix)

    @given(
        st.builds(
            lambda names, absl, edges, label: (names, absl, edges, label),
            st.lists(st.text(min_size=1, max_size=8), min_size=1, max_size=6),
            st.lists(st.sampled_from(list(AbsType)), min_size=6, max_size=6),
            st.lists(
                st.tuples(
                    st.integers(0, 5),
                    st.integers(0, 5),
                    st.sampled_from(list(EdgeOp)),
                    st.one_of(st.none(), st.integers(0, 10**6)),
                ),
                max_size=10,
            ),
            st.one_of(st.none(), st.text(max_size=5)),
        )
    )
    def test_round_trip_property(self, parts):
        names, absl, raw_edges, label = parts
        g = AttrGraph(label=label)
        for i, name in enumerate(names):
            g.add_node(name, absl[i])
        for s, d, op, ts in raw_edges:
            if s < g.n_nodes and d < g.n_nodes:
                g.add_edge(s, d, op, ts)
        assert graph_from_dict(graph_to_dict(g)) == g


class TestGraphOps:
    def test_add_edge_bounds(self):
        g = AttrGraph()
        g.add_node("a", AbsType.USR_PROCESS)
        with pytest.raises(ValueError):
            g.add_edge(0, 1, EdgeOp.FORK)

    def test_dedup_edges_keeps_first(self):
        g = AttrGraph()
        a = g.add_node("a", AbsType.USR_PROCESS)
        b = g.add_node("b", AbsType.USR_FILE)
        g.add_edge(a, b, EdgeOp.WRITE, ts=5)
        g.add_edge(a, b, EdgeOp.WRITE, ts=9)
        g.add_edge(a, b, EdgeOp.READ, ts=7)
        g.dedup_edges()
        assert [(e.op, e.ts) for e in g.edges] == [(EdgeOp.WRITE, 5), (EdgeOp.READ, 7)]

    def test_node_key_normalizes(self):
        assert AttrNode("/usr/bin/FireFox", AbsType.WEB_PROCESS).key() == (
            "firefox",
            AbsType.WEB_PROCESS,
        )
        assert AttrNode("/etc//Passwd", AbsType.CFG_FILE).key() == (
            "/etc/passwd",
            AbsType.CFG_FILE,
        )

    def test_permuted_relabels(self):
        g = small_graph()
        perm = [2, 0, 1]
        h = g.permuted(perm)
        assert h.nodes[2].name == "/usr/bin/bash"
        assert sorted(h.edge_multiset()) == sorted(
            {(perm[s], perm[d], op): c for (s, d, op), c in g.edge_multiset().items()}
        )
        inv = [perm.index(i) for i in range(3)]
        assert h.permuted(inv) == g

    def test_permuted_rejects_non_permutation(self):
        with pytest.raises(ValueError):
            small_graph().permuted([0, 0, 1])

    def test_to_attr_graph_projection(self):
        g = small_graph()
        assert to_attr_graph(g) is g

        class Holder:
            graph = g

        assert to_attr_graph(Holder()) is g
        with pytest.raises(TypeError):
            to_attr_graph(42)


class TestPoiPatterns:
    def test_read_sensitive_file_flags_subject(self):
        events = [
            mk_event("p1", "read", "/etc/group", ts=1, sbj_name="/bin/bash"),
            mk_event("p2", "read", "/home/u/notes.txt", ts=2),
        ]
        res = match_pois(events, [PoiPattern(op="read", obj="/etc/group")])
        assert res.ids == ["p1"]
        assert len(res.events) == 1

    def test_named_writer_any_object(self):
        events = [
            mk_event("p9", "write", "/tmp/x", ts=1, sbj_name="/opt/firefox/firefox"),
            mk_event("p3", "write", "/tmp/x", ts=2, sbj_name="gedit"),
        ]
        res = match_pois(events, [PoiPattern(sbj="firefox", op="write")])
        assert res.ids == ["p9"]

    def test_no_match_is_empty(self):
        events = [mk_event("p1", "read", "/etc/group", ts=1)]
        res = match_pois(events, [PoiPattern(op="unlink")])
        assert res.ids == [] and res.events == []

    def test_glob_and_path_normalization(self):
        ev = mk_event("p1", "read", "/etc//shadow", ts=1)
        assert PoiPattern(obj="/etc/sh*").matches(ev)
        assert not PoiPattern(obj="/etc/sh").matches(ev)

    def test_netflow_pattern_matches_address(self):
        ev = mk_event("p1", "send", "flow-1", ts=1, obj_addr="203.0.113.9:443")
        assert PoiPattern(op="send", obj="203.0.113.*").matches(ev)
        assert not PoiPattern(op="send", obj="10.0.0.*").matches(ev)

    def test_all_wildcards_rejected(self):
        with pytest.raises(ValueError):
            PoiPattern()

    def test_unknown_op_rejected(self):
        with pytest.raises(ValueError):
            PoiPattern(op="sendto")

    def test_ids_unique_first_seen_and_counts(self):
        events = [
            mk_event("p1", "write", "/etc/a", ts=1),
            mk_event("p2", "write", "/etc/b", ts=2),
            mk_event("p1", "write", "/etc/c", ts=3),
        ]
        pats = [PoiPattern(op="write"), PoiPattern(obj="/etc/*")]
        res = match_pois(events, pats)
        assert res.ids == ["p1", "p2"]
        assert len(res.events) == 3
        assert res.by_pattern == {0: 3, 1: 3}

    @given(
        st.lists(
            st.tuples(
                st.sampled_from(["p1", "p2", "p3"]),
                st.sampled_from(["read", "write", "unlink"]),
                st.sampled_from(["/etc/a", "/tmp/b", "/home/c"]),
            ),
            max_size=20,
        ),
        st.lists(
            st.sampled_from(
                [
                    PoiPattern(op="read"),
                    PoiPattern(op="write", obj="/etc/*"),
                    PoiPattern(sbj="p1"),
                    PoiPattern(obj="/tmp/*"),
                ]
            ),
            max_size=4,
        ),
    )
    def test_monotone_in_patterns(self, raw, pats):
        events = [mk_event(s, o, t, ts=i) for i, (s, o, t) in enumerate(raw)]
        base = set(match_pois(events, pats).ids)
        extended = set(match_pois(events, pats + [PoiPattern(op="unlink")]).ids)
        assert base <= extended

    def test_pattern_file_round_trip(self, tmp_path):
        path = tmp_path / "pats.json"
        path.write_text(
            json.dumps([{"op": "read", "obj": "/etc/group"}, {"sbj": "firefox"}])
        )
        pats = load_patterns(str(path))
        assert pats[0] == PoiPattern(op="read", obj="/etc/group")
        assert pats[1] == PoiPattern(sbj="firefox")

    @pytest.mark.parametrize(
        "doc,path_prefix",
        [
            ({"op": "read"}, "$"),
            ([{"op": 3}], "[0].op"),
            ([{"verb": "read"}], "[0].verb"),
            ([{"sbj": "*", "op": "*", "obj": "*"}], "[0]"),
        ],
    )
    def test_pattern_schema_errors(self, doc, path_prefix):
        with pytest.raises(SchemaError) as exc:
            patterns_from_dicts(doc)
        assert str(exc.value).startswith(path_prefix)


class TestPoiResolution:
    def test_resolve_against_store(self):
        events = [
            mk_event("p1", "write", "/etc/a", ts=1),
            mk_event("p2", "read", "/etc/a", ts=2),
        ]
        g = Ppg()
        g.add_events(events)
        snap = g.snapshot()
        res = match_pois(events, [PoiPattern(obj="/etc/*")])
        ents = poi_entities(snap, res.ids)
        assert ents == {snap.entity_of_id("p1"), snap.entity_of_id("p2")}

    def test_unknown_id_raises(self):
        g = Ppg()
        g.add_event(mk_event("p1", "write", "/etc/a", ts=1))
        with pytest.raises(ValueError):
            poi_entities(g.snapshot(), ["ghost"])
