import random

import numpy as np
import pytest

from conftest import random_event_scene
from provhunt.estimator import NotFittedError, ThreatMatcher
from provhunt.graphs import AttrGraph
from provhunt.ppg import Ppg
from provhunt.sampler import SamplingConfig, sample
from provhunt.vocab import AbsType, EdgeOp

# tiny corpora legitimately trip the pair builder's distance-floor fallback
pytestmark = pytest.mark.filterwarnings("ignore:anchor .*distance floor")


def chain_graph(n, abs_type=AbsType.UTIL_PROCESS, op=EdgeOp.FORK, tag="p"):
    g = AttrGraph()
    for i in range(n):
        g.add_node(f"{tag}{i}", abs_type)
    for i in range(n - 1):
        g.add_edge(i, i + 1, op)
    return g


def star_graph(n, tag="f"):
    g = AttrGraph()
    hub = g.add_node(f"{tag}hub", AbsType.USR_PROCESS)
    for i in range(n - 1):
        leaf = g.add_node(f"{tag}{i}", AbsType.TMP_FILE)
        g.add_edge(hub, leaf, EdgeOp.WRITE)
    return g


def tiny_corpus():
    gs = []
    for i in range(3, 7):
        gs.append(chain_graph(i, tag=f"c{i}"))
        gs.append(star_graph(i, tag=f"s{i}"))
    return gs


def fast_matcher(**kw):
    kw.setdefault("d", 8)
    kw.setdefault("epochs", 2)
    kw.setdefault("corpus_size", 8)
    kw.setdefault("batch_size", 4)
    return ThreatMatcher(**kw)


class TestParams:
    def test_get_params_reflects_constructor(self):
        m = ThreatMatcher(d=32, epochs=7, theta=0.5)
        p = m.get_params()
        assert p["d"] == 32 and p["epochs"] == 7 and p["theta"] == 0.5

    def test_set_params_round_trip(self):
        m = ThreatMatcher()
        m.set_params(**{**m.get_params(), "lr": 0.01})
        assert m.lr == 0.01

    def test_set_params_rejects_unknown(self):
        with pytest.raises(ValueError, match="unknown parameter"):
            ThreatMatcher().set_params(momentum=0.9)

    def test_set_params_returns_self(self):
        m = ThreatMatcher()
        assert m.set_params(theta=0.1) is m


class TestFit:
    def test_unfitted_methods_raise(self):
        m = ThreatMatcher()
        with pytest.raises(NotFittedError):
            m.score_samples(tiny_corpus(), [chain_graph(3)])
        with pytest.raises(NotFittedError):
            m.transform(tiny_corpus())

    def test_fit_on_graph_sequence(self):
        m = fast_matcher().fit(tiny_corpus())
        assert m.n_iter_ == 2
        assert len(m.losses_) == 2
        assert len(m.corpus_) == 8
        assert m.model_.d == 8

    def test_fit_on_snapshot_samples_corpus(self):
        events = random_event_scene(random.Random(3), max_events=240)
        g = Ppg()
        g.add_events(events)
        m = fast_matcher(corpus_size=6).fit(g.snapshot())
        assert len(m.corpus_) == 6

    def test_fit_rejects_degenerate_corpus(self):
        with pytest.raises(ValueError, match="at least two"):
            fast_matcher().fit([chain_graph(4)])

    def test_fit_is_deterministic(self):
        a = fast_matcher(seed=5).fit(tiny_corpus())
        b = fast_matcher(seed=5).fit(tiny_corpus())
        assert a.model_.digest() == b.model_.digest()
        assert a.losses_ == b.losses_

    def test_threat_graphs_accepted_as_corpus(self):
        events = random_event_scene(random.Random(27), max_events=200)
        g = Ppg()
        g.add_events(events)
        snap = g.snapshot()
        seeds = snap.process_entities()[:6]
        tgs = sample(snap, seeds, SamplingConfig(k=2))
        assert len(tgs) >= 2
        m = fast_matcher().fit(tgs)
        assert len(m.corpus_) == len(tgs)


@pytest.fixture(scope="module")
def fitted():
    return fast_matcher(seed=1).fit(tiny_corpus())


class TestScoring:

    def test_score_shape_and_range(self, fitted):
        batch = [chain_graph(4, tag="x"), star_graph(5, tag="y")]
        s = fitted.score_samples(batch, [chain_graph(4, tag="q")])
        assert s.shape == (2,)
        assert np.all(s <= 1.0 + 1e-9) and np.all(s >= -1.0 - 1e-9)

    def test_score_empty_batch(self, fitted):
        assert fitted.score_samples([], [chain_graph(3)]).shape == (0,)

    def test_score_requires_queries(self, fitted):
        with pytest.raises(ValueError, match="query library"):
            fitted.score_samples([chain_graph(3)], [])

    def test_score_takes_max_over_queries(self, fitted):
        batch = [chain_graph(5, tag="x")]
        qs = [chain_graph(5, tag="q"), star_graph(6, tag="r")]
        both = fitted.score_samples(batch, qs)[0]
        singles = [fitted.score_samples(batch, [q])[0] for q in qs]
        assert both == pytest.approx(max(singles))

    def test_predict_applies_theta(self, fitted):
        batch = [chain_graph(4, tag="x"), star_graph(5, tag="y")]
        qs = [chain_graph(4, tag="q")]
        s = fitted.score_samples(batch, qs)
        fitted.theta = float(s.min() + 1e-12)
        pred = fitted.predict(batch, qs)
        assert pred.tolist() == [int(v >= fitted.theta) for v in s]

    def test_score_accuracy(self, fitted):
        batch = [chain_graph(4, tag="x")]
        qs = [chain_graph(4, tag="q")]
        pred = int(fitted.predict(batch, qs)[0])
        assert fitted.score(batch, [pred], qs) == 1.0
        assert fitted.score(batch, [1 - pred], qs) == 0.0

    def test_transform_rows_match_embed(self, fitted):
        batch = [chain_graph(4, tag="x"), star_graph(3, tag="y")]
        e = fitted.transform(batch)
        assert e.shape == (2, 8)
        np.testing.assert_allclose(e[0], fitted.model_.embed(batch[0]))

    def test_rejects_non_graph_input(self, fitted):
        with pytest.raises(TypeError, match="expected an attribute graph"):
            fitted.score_samples(["nope"], [chain_graph(3)])


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        m = fast_matcher(seed=2).fit(tiny_corpus())
        path = tmp_path / "m.npz"
        m.save(path)
        other = ThreatMatcher().load(path)
        assert other.model_.digest() == m.model_.digest()
        batch = [chain_graph(4, tag="x")]
        qs = [star_graph(4, tag="q")]
        np.testing.assert_allclose(
            other.score_samples(batch, qs), m.score_samples(batch, qs)
        )

    def test_save_unfitted_raises(self, tmp_path):
        with pytest.raises(NotFittedError):
            ThreatMatcher().save(tmp_path / "m.npz")
