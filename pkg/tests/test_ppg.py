from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import mk_event
from oracles import NaiveVersionStore
from provhunt import packing as pk
from provhunt.ingest import Direction
from provhunt.ppg import (
    InsertOutcome,
    Ppg,
    TraversalDir,
    build_ppg,
    load_ppg,
    save_ppg,
)
from provhunt.vocab import AbsType, EdgeOp, EntityKind


def ppg_edge_multiset(snap):
    return Counter(
        (snap.ent_id(e.sbj_ent), snap.ent_id(e.obj_ent), e.op, e.dir.value, e.ts)
        for e in snap.iter_events()
    )


def ppg_incident_multiset(snap, ent):
    both = []
    for d in (TraversalDir.OUT, TraversalDir.IN):
        both.extend(
            (snap.ent_id(r.other), r.op, r.dir.value, r.ts)
            for r in snap.neighbors(ent, d)
        )
    return Counter(both)


class TestAddEvent:
    def test_first_fork_creates_both_nodes(self):
        g = Ppg()
        out = g.add_event(mk_event("p1", "fork", "p2", ts=1000))
        assert out is InsertOutcome.INSERTED
        assert len(g.sbj.abs_code) == 1
        assert len(g.obj.abs_code) == 1
        assert len(g.sbj.queues[0]) == 1
        assert g.view().n_entities == 2

    def test_same_entity_in_both_roles(self):
        g = Ppg()
        g.add_event(mk_event("p1", "fork", "p2", ts=0))
        g.add_event(mk_event("p2", "write", "f1", ts=1))
        v = g.view()
        assert v.n_entities == 3  # p1, p2, f1 — p2 is one entity with two roles
        ent_p2 = v.entity_of_id("p2")
        assert v.ent_sidx[ent_p2] >= 0 and v.ent_oidx[ent_p2] >= 0

    def test_abstraction_applied_on_first_sight(self):
        g = Ppg()
        g.add_event(mk_event("p1", "read", "f1", ts=0, sbj_name="bash", obj_name="/etc/hosts"))
        v = g.view()
        assert v.ent_abs(v.entity_of_id("p1")) is AbsType.UTIL_PROCESS
        assert v.ent_abs(v.entity_of_id("f1")) is AbsType.CFG_FILE

    def test_write_twice_suppressed_with_versioning(self):
        g = Ppg(versioning=True)
        assert g.add_event(mk_event("p1", "write", "f1", ts=0)) is InsertOutcome.INSERTED
        assert (
            g.add_event(mk_event("p1", "write", "f1", ts=5))
            is InsertOutcome.SUPPRESSED_BY_VERSION
        )

    def test_interleaved_writers_all_inserted(self):
        g = Ppg(versioning=True)
        outs = [
            g.add_event(mk_event(p, "write", "f1", ts=t))
            for t, p in enumerate(["p1", "p2", "p1"])
        ]
        assert outs == [InsertOutcome.INSERTED] * 3

    def test_versioning_off_never_suppresses(self):
        g = Ppg(versioning=False)
        for t in range(5):
            assert g.add_event(mk_event("p1", "write", "f1", ts=t)) is InsertOutcome.INSERTED

    def test_read_does_not_advance_version(self):
        g = Ppg(versioning=True)
        assert g.add_event(mk_event("p1", "read", "f1", ts=0)) is InsertOutcome.INSERTED
        # identical read with version still 0 is suppressed
        assert (
            g.add_event(mk_event("p1", "read", "f1", ts=1))
            is InsertOutcome.SUPPRESSED_BY_VERSION
        )
        # a write bumps the version, unlocking the next read
        g.add_event(mk_event("p2", "write", "f1", ts=2))
        assert g.add_event(mk_event("p1", "read", "f1", ts=3)) is InsertOutcome.INSERTED

    def test_sparse_edge_clamps_version_snapshot(self):
        # An object past 255 versions is long promoted (16-bit counter), but a
        # fresh sparse subject still stores the snapshot in an 8-bit field.
        g = Ppg()
        for t in range(300):
            g.add_event(mk_event(f"p{t % 2}", "write", "f1", ts=t))
        oidx = g.obj.index["f1"]
        assert g.obj.exp[oidx] == 1
        assert g.obj.version[oidx] == 300
        g.add_event(mk_event("fresh", "write", "f1", ts=400))
        sidx = g.sbj.index["fresh"]
        assert g.sbj.exp[sidx] == 0
        *_, version = pk.unpack_sparse_subject(g.sbj.queues[sidx][0])
        assert version == pk.VERSION8_MAX

    def test_version_counter_saturates_at_sixteen_bits(self):
        g = Ppg(versioning=True)
        n = pk.VERSION16_MAX + 40
        outcomes = [
            g.add_event(mk_event(f"p{t % 2}", "write", "f1", ts=t)) for t in range(n)
        ]
        oidx = g.obj.index["f1"]
        assert g.obj.version[oidx] == pk.VERSION16_MAX  # sticks at max, no wrap
        # once both writers see the saturated version, everything is suppressed
        assert outcomes[-1] is InsertOutcome.SUPPRESSED_BY_VERSION
        assert outcomes.count(InsertOutcome.INSERTED) == pk.VERSION16_MAX + 1

    def test_over_32_days_is_hard_error(self):
        g = Ppg()
        g.add_event(mk_event("p1", "read", "f1", ts=0))
        with pytest.raises(ValueError, match="5-bit date"):
            g.add_event(mk_event("p1", "read", "f1", ts=pk.MS_PER_DAY * 32))


class TestPromotion:
    def test_seventeenth_edge_promotes(self):
        g = Ppg()
        for t in range(16):
            g.add_event(mk_event("p1", "read", f"f{t}", ts=t))
        sidx = g.sbj.index["p1"]
        assert g.sbj.exp[sidx] == 0
        assert len(g.sbj.queues[sidx]) == 16
        g.add_event(mk_event("p1", "read", "f16", ts=16))
        assert g.sbj.exp[sidx] == 1
        assert len(g.sbj.queues[sidx]) == 17

    def test_out_of_range_delta_promotes_immediately(self):
        g = Ppg()
        for i in range(1100):
            g.add_event(mk_event(f"p{i}", "read", f"f{i}", ts=i))
        sidx = g.sbj.index["p0"]
        assert g.sbj.exp[sidx] == 0
        # object index 1099 is 1099 ahead of subject 0: outside the 11-bit range
        g.add_event(mk_event("p0", "read", "f1099", ts=2000))
        assert g.sbj.exp[sidx] == 1
        assert len(g.sbj.queues[sidx]) == 2

    def test_object_promotion_at_cap(self):
        g = Ppg()
        for t in range(17):
            g.add_event(mk_event(f"p{t}", "write", "f1", ts=t))
        oidx = g.obj.index["f1"]
        assert g.obj.exp[oidx] == 1
        assert len(g.obj.queues[oidx]) == 17

    def test_promotion_idempotent(self):
        g = Ppg()
        for t in range(20):
            g.add_event(mk_event("p1", "read", f"f{t}", ts=t))
        sidx = g.sbj.index["p1"]
        before = list(g.sbj.queues[sidx])
        g._promote_subject(sidx)
        assert g.sbj.queues[sidx] == before

    def test_promotion_preserves_edges(self):
        events = [mk_event("p1", "read", f"f{t}", ts=t * 7) for t in range(40)]
        g, _ = build_ppg(events)
        oracle = NaiveVersionStore()
        oracle.add_all(events)
        assert ppg_edge_multiset(g.view()) == oracle.edge_multiset()


class TestNeighbors:
    def test_outgoing_ascending(self):
        g = Ppg()
        for ts in (5, 1, 9):
            g.add_event(mk_event("p1", "write", f"f{ts}", ts=ts))
        v = g.view()
        recs = list(v.neighbors(v.entity_of_id("p1"), TraversalDir.OUT))
        assert [r.ts for r in recs] == [1, 5, 9]

    def test_incoming_descending(self):
        g = Ppg()
        for ts in (5, 1, 9):
            g.add_event(mk_event("p1", "read", f"f{ts}", ts=ts))
        v = g.view()
        recs = list(v.neighbors(v.entity_of_id("p1"), TraversalDir.IN))
        assert [r.ts for r in recs] == [9, 5, 1]

    def test_no_edges_empty_iterator(self):
        g = Ppg()
        g.add_event(mk_event("p1", "write", "f1", ts=0))
        v = g.view()
        assert list(v.neighbors(v.entity_of_id("f1"), TraversalDir.OUT)) == []

    def test_object_side_resolution_with_duplicate_templates(self):
        g = Ppg()
        for ts in (10, 20, 30):
            g.add_event(mk_event("p1", "write", "f1", ts=ts))
        g.add_event(mk_event("p2", "write", "f1", ts=25))
        v = g.view()
        recs = list(v.neighbors(v.entity_of_id("f1"), TraversalDir.IN))
        assert [(v.ent_id(r.other), r.ts) for r in recs] == [
            ("p1", 30), ("p2", 25), ("p1", 20), ("p1", 10),
        ]
        assert all(r.op is EdgeOp.WRITE for r in recs)


class TestSnapshot:
    def test_snapshot_is_isolated_from_later_writes(self):
        g = Ppg()
        for t in range(16):
            g.add_event(mk_event("p1", "read", f"f{t}", ts=t))
        snap = g.snapshot()
        before_nodes = snap.n_entities
        before_edges = ppg_edge_multiset(snap)
        # trigger promotion of p1 plus brand-new nodes
        for t in range(16, 24):
            g.add_event(mk_event("p1", "read", f"f{t}", ts=t))
        g.add_event(mk_event("px", "write", "fx", ts=30))
        assert snap.n_entities == before_nodes
        assert ppg_edge_multiset(snap) == before_edges
        ent = snap.entity_of_id("p1")
        assert snap.ent_exp(ent) == 0  # promotion happened after the snapshot
        assert len(list(snap.neighbors(ent, TraversalDir.IN))) == 16

    def test_two_snapshots_differ_by_inserted_delta(self):
        g = Ppg()
        g.add_event(mk_event("p1", "write", "f1", ts=0))
        s1 = g.snapshot()
        g.add_event(mk_event("p1", "write", "f2", ts=1))
        s2 = g.snapshot()
        d = ppg_edge_multiset(s2) - ppg_edge_multiset(s1)
        assert sum(d.values()) == 1

    def test_new_entities_invisible_through_old_snapshot(self):
        g = Ppg()
        g.add_event(mk_event("p1", "write", "f1", ts=0))
        snap = g.snapshot()
        g.add_event(mk_event("p9", "write", "f9", ts=1))
        assert snap.entity_of_id("p9") is None


class TestMemoryReport:
    def test_empty_graph(self):
        rep = Ppg().memory_report()
        assert rep["total_bytes"] == 0
        assert rep["n_edges"] == 0

    def test_sparse_edge_byte_size(self):
        g = Ppg()
        for i in range(1000):
            g.add_event(mk_event(f"p{i}", "write", f"f{i}", ts=i))
        rep = g.memory_report()
        assert rep["bytes_per_edge_class"]["sparse_subject"] == 8
        assert rep["edge_bytes"]["sparse_subject"] == 8 * 1000
        assert rep["edge_bytes"]["sparse_object"] == 4 * 1000
        assert rep["exp_node_count"] == 0
        assert rep["node_bytes"] == 2000 * 16

    def test_extended_classes_counted(self):
        g = Ppg()
        for t in range(20):
            g.add_event(mk_event("p1", "read", f"f{t}", ts=t))
        rep = g.memory_report()
        assert rep["edge_counts"]["ext_subject"] == 20
        assert rep["edge_bytes"]["ext_subject"] == 20 * 12
        assert rep["exp_node_count"] == 1


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        events = [mk_event(f"p{i % 3}", "write", f"f{i % 5}", ts=i * 11) for i in range(60)]
        events += [mk_event("p0", "send", "n1", ts=700 + i) for i in range(3)]
        g, _ = build_ppg(events)
        path = tmp_path / "g.ppg"
        save_ppg(g, path)
        g2 = load_ppg(path)
        assert ppg_edge_multiset(g2.view()) == ppg_edge_multiset(g.view())
        assert g2.view().n_entities == g.view().n_entities
        assert g2.stats() == g.stats()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ppg"
        path.write_bytes(b"nope" + b"\0" * 32)
        with pytest.raises(ValueError, match="not a packed-graph"):
            load_ppg(path)


# -- randomized equivalence against the replay oracle ------------------------

_kinds_ops = [
    (EntityKind.FILE, EdgeOp.READ, Direction.IN),
    (EntityKind.FILE, EdgeOp.WRITE, Direction.OUT),
    (EntityKind.FILE, EdgeOp.CREATE, Direction.OUT),
    (EntityKind.PROCESS, EdgeOp.FORK, Direction.OUT),
    (EntityKind.PROCESS, EdgeOp.MODIFY, Direction.OUT),
    (EntityKind.NETFLOW, EdgeOp.SEND, Direction.OUT),
    (EntityKind.NETFLOW, EdgeOp.RECV, Direction.IN),
]


@st.composite
def _streams(draw, max_events=80):
    n = draw(st.integers(1, max_events))
    ts = draw(st.integers(0, 10**12))
    out = []
    for _ in range(n):
        ts += draw(st.integers(0, 3_600_000))
        kind, op, direction = draw(st.sampled_from(_kinds_ops))
        sbj = f"p{draw(st.integers(0, 3))}"
        if kind is EntityKind.PROCESS:
            obj = f"p{draw(st.integers(0, 3))}"
        elif kind is EntityKind.FILE:
            obj = f"f{draw(st.integers(0, 2))}"
        else:
            obj = f"n{draw(st.integers(0, 1))}"
        out.append(mk_event(sbj, op, obj, ts=ts, obj_kind=kind, dir=direction))
    return out


@given(_streams(), st.booleans())
@settings(max_examples=120)
def test_replay_equivalence(stream, versioning):
    g, suppressed = build_ppg(stream, versioning=versioning)
    oracle = NaiveVersionStore(versioning=versioning)
    flags = oracle.add_all(stream)
    assert suppressed == flags.count(False)
    snap = g.snapshot()
    assert ppg_edge_multiset(snap) == oracle.edge_multiset()
    # per-node incident view must yield each surviving event exactly once
    for ent in range(snap.n_entities):
        assert ppg_incident_multiset(snap, ent) == oracle.incident_multiset(snap.ent_id(ent))
    # sparse bound: no unpromoted node reports more than 16 edges
    for i, q in enumerate(g.sbj.queues):
        if not g.sbj.exp[i]:
            assert len(q) <= 16
    for i, q in enumerate(g.obj.queues):
        if not g.obj.exp[i]:
            assert len(q) <= 16


@given(_streams(max_events=50))
@settings(max_examples=60)
def test_exp_flag_never_reverts(stream):
    g = Ppg()
    seen_exp = set()
    for e in stream:
        g.add_event(e)
        for side in (g.sbj, g.obj):
            for i, flag in enumerate(side.exp):
                key = (id(side), i)
                if key in seen_exp:
                    assert flag == 1
                elif flag:
                    seen_exp.add(key)
