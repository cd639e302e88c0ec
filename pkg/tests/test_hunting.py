"""Tests for query-driven hunting and its evaluation metrics."""

import json

import numpy as np
import pytest

from conftest import mk_event
from provhunt.graphs import AttrGraph
from provhunt.hunting import HuntReport, evaluate, hunt, hunt_exhaustive
from provhunt.matchnet import ReprModel
from provhunt.ppg import Ppg
from provhunt.vocab import AbsType, EdgeOp

from test_training import service_ppg, _SVC_NAMES


def attacked_ppg():
    """Service background plus a drop/beacon chain rooted at sshd."""
    g = service_ppg()
    t = 10_000
    chain = [
        mk_event("sshd", "fork", "sh", ts=t),
        mk_event("sh", "write", "/tmp/payload", ts=t + 1),
        mk_event("sh", "exec", "miner", ts=t + 2),
        mk_event("miner", "load", "/tmp/payload", ts=t + 3),
        mk_event("miner", "read", "/etc/keys.conf", ts=t + 4),
        mk_event("miner", "send", "203.0.113.66:9001", ts=t + 5,
                 obj_addr="203.0.113.66:9001"),
    ]
    g.add_events(chain)
    return g


def attack_query() -> AttrGraph:
    q = AttrGraph(label="drop-and-beacon")
    sh = q.add_node("sh", AbsType.UTIL_PROCESS)
    payload = q.add_node("/tmp/payload", AbsType.TMP_FILE)
    miner = q.add_node("miner", AbsType.UNKNOWN_PROCESS)
    conf = q.add_node("/etc/keys.conf", AbsType.CFG_FILE)
    flow = q.add_node("203.0.113.66:9001", AbsType.PUBLIC_NETFLOW)
    q.add_edge(sh, payload, EdgeOp.WRITE)
    q.add_edge(sh, miner, EdgeOp.EXEC)
    q.add_edge(miner, payload, EdgeOp.LOAD)
    q.add_edge(miner, conf, EdgeOp.READ)
    q.add_edge(miner, flow, EdgeOp.SEND)
    return q


@pytest.fixture(scope="module")
def setup():
    ppg = attacked_ppg()
    snap = ppg.snapshot()
    miner = snap.entity_of_id("miner")
    assert miner is not None
    return snap, miner, [attack_query()], ReprModel(d=8, seed=0)


class TestHunt:
    def test_report_shape(self, setup):
        snap, miner, queries, model = setup
        rep = hunt(snap, [miner], queries, model, theta=0.0)
        assert rep.n_graphs == len(rep.threat_graphs) >= 1
        assert rep.k == 2 and rep.theta == 0.0
        assert rep.model_digest == model.digest()
        scores = [v.score for v in rep.verdicts]
        assert scores == sorted(scores, reverse=True)
        for v in rep.verdicts:
            assert len(v.per_query) == len(queries)
            assert v.score == max(v.per_query)
            assert v.per_query[v.best_query] == v.score
            assert v.flagged == (v.score >= rep.theta)
            assert 0 <= v.graph_id < rep.n_graphs
        assert rep.n_flagged == sum(v.flagged for v in rep.verdicts)

    def test_accepts_live_store(self, setup):
        _, miner, queries, model = setup
        rep = hunt(attacked_ppg(), [miner], queries, model)
        assert rep.n_graphs >= 1

    def test_theta_extremes(self, setup):
        snap, miner, queries, model = setup
        procs = snap.process_entities()[:6]
        none = hunt(snap, procs, queries, model, theta=1.5)
        assert none.n_flagged == 0
        assert not none.any_flagged
        everything = hunt(snap, procs, queries, model, theta=-1.5)
        assert everything.n_flagged == everything.n_graphs
        assert everything.any_flagged

    def test_raising_theta_never_flags_more(self, setup):
        snap, miner, queries, model = setup
        procs = snap.process_entities()[:8]
        counts = [
            hunt(snap, procs, queries, model, theta=t).n_flagged
            for t in (-1.5, -0.5, 0.0, 0.3, 0.8, 1.5)
        ]
        assert counts == sorted(counts, reverse=True)
        assert counts[0] > 0 and counts[-1] == 0

    def test_empty_inputs_rejected(self, setup):
        snap, miner, queries, model = setup
        with pytest.raises(ValueError, match="alert"):
            hunt(snap, [], queries, model)
        with pytest.raises(ValueError, match="query"):
            hunt(snap, [miner], [], model)

    def test_exhaustive_sweeps_every_process(self, setup):
        snap, _, queries, model = setup
        rep = hunt_exhaustive(snap, queries, model)
        seeds = set()
        for tg in rep.threat_graphs:
            seeds |= set(tg.seeds)
        assert seeds == set(snap.process_entities())

    def test_exhaustive_stride(self, setup):
        snap, _, queries, model = setup
        rep = hunt_exhaustive(snap, queries, model, stride=3)
        seeds = set()
        for tg in rep.threat_graphs:
            seeds |= set(tg.seeds)
        assert seeds == set(snap.process_entities()[::3])
        with pytest.raises(ValueError):
            hunt_exhaustive(snap, queries, model, stride=0)

    def test_labeler_gates_metrics(self, setup):
        snap, _, queries, model = setup
        procs = snap.process_entities()[:6]
        full = hunt(snap, procs, queries, model, labeler=lambda tg: True)
        assert full.metrics is not None
        assert full.metrics["fpr"] is None  # no negatives in this labeling
        spotty = hunt(
            snap, procs, queries, model,
            labeler=lambda tg: True if tg.seeds[0] % 2 else None,
        )
        assert spotty.metrics is None

    def test_report_serializes(self, setup):
        snap, miner, queries, model = setup
        rep = hunt(snap, [miner], queries, model, labeler=lambda tg: True)
        blob = json.dumps(rep.to_dict())
        back = json.loads(blob)
        assert back["model_digest"] == model.digest()
        assert back["n_graphs"] == rep.n_graphs
        assert len(back["verdicts"]) == rep.n_graphs
        assert all("label" in v for v in back["verdicts"])

    def test_digest_tracks_weights(self):
        a, b = ReprModel(d=8, seed=1), ReprModel(d=8, seed=1)
        assert a.digest() == b.digest()
        b.params["l1.m1"][0, 0] += 1.0
        assert a.digest() != b.digest()


class TestEvaluate:
    def test_perfect_and_inverted_and_flat(self):
        labels = [True, True, False, False]
        assert evaluate([0.9, 0.8, 0.2, 0.1], labels, 0.5)["auc"] == 1.0
        assert evaluate([0.1, 0.2, 0.8, 0.9], labels, 0.5)["auc"] == 0.0
        assert evaluate([0.5, 0.5, 0.5, 0.5], labels, 0.5)["auc"] == 0.5

    def test_confusion_at_threshold(self):
        scores = [0.9, 0.8, 0.2, 0.1]
        labels = [True, True, False, False]
        m = evaluate(scores, labels, 0.5)
        assert m == {"recall": 1.0, "fpr": 0.0, "accuracy": 1.0, "auc": 1.0}
        m = evaluate(scores, labels, 0.85)
        assert m["recall"] == 0.5 and m["fpr"] == 0.0 and m["accuracy"] == 0.75
        m = evaluate(scores, labels, 0.0)
        assert m["recall"] == 1.0 and m["fpr"] == 1.0 and m["accuracy"] == 0.5

    def test_threshold_boundary_is_inclusive(self):
        m = evaluate([0.3], [True], 0.3)
        assert m["recall"] == 1.0

    def test_single_class_sides(self):
        m = evaluate([0.4, 0.6], [False, False], 0.5)
        assert m["recall"] is None
        assert m["fpr"] == 0.5
        assert m["auc"] is None
        m = evaluate([0.4, 0.6], [True, True], 0.5)
        assert m["fpr"] is None
        assert m["recall"] == 0.5
        assert m["auc"] is None

    def test_tie_between_classes_averages(self):
        m = evaluate([0.5, 0.5], [True, False], 0.9)
        assert m["auc"] == 0.5

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            evaluate([0.1, 0.2], [True], 0.5)
        with pytest.raises(ValueError):
            evaluate([], [], 0.5)
