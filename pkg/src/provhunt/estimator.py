"""Estimator front end for the pair matcher, scikit-learn in spirit.

ThreatMatcher folds corpus sampling, contrastive training, and query
scoring behind the familiar fit/predict surface so the matcher drops into
pipelines and grid sweeps without touching the lower-level modules. It
deliberately avoids importing scikit-learn; only the conventions are kept
(constructor stores hyperparameters untouched, fitted state lives in
trailing-underscore attributes, get_params/set_params round-trip).
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .graphs import AttrGraph
from .matchnet import ReprModel, load_model, save_model
from .training import TrainConfig, sample_benign_corpus, train

_PARAM_NAMES = (
    "d", "layers", "gate_threshold", "tau", "epochs", "batch_size", "lr",
    "perturb_ratio", "corpus_size", "theta", "seed",
)


class NotFittedError(RuntimeError):
    """Raised when a fitted-only method runs before fit."""


def _as_graph(x) -> AttrGraph:
    # accept sampled threat graphs as well as bare attribute graphs
    g = getattr(x, "graph", x)
    if not isinstance(g, AttrGraph):
        raise TypeError(f"expected an attribute graph, got {type(x).__name__}")
    return g


class ThreatMatcher:
    """Graph pair matcher with a fit/score/predict workflow.

    fit takes either a store snapshot, from which a benign corpus is
    sampled, or an explicit sequence of graphs used as the corpus directly.
    Scoring is always relative to a query library: score_samples returns
    each graph's best match against the queries, and predict thresholds
    that score at theta.
    """

    def __init__(self, d: int = 128, layers: int = 3, gate_threshold: int = 3,
                 tau: float = 0.1, epochs: int = 100, batch_size: int = 16,
                 lr: float = 0.001, perturb_ratio: float = 0.2,
                 corpus_size: int = 1500, theta: float = 0.3, seed: int = 0):
        self.d = d
        self.layers = layers
        self.gate_threshold = gate_threshold
        self.tau = tau
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.perturb_ratio = perturb_ratio
        self.corpus_size = corpus_size
        self.theta = theta
        self.seed = seed

    # -- parameter plumbing ---------------------------------------------------

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in _PARAM_NAMES}

    def set_params(self, **params) -> "ThreatMatcher":
        for name, value in params.items():
            if name not in _PARAM_NAMES:
                raise ValueError(
                    f"unknown parameter {name!r}; valid: {', '.join(_PARAM_NAMES)}"
                )
            setattr(self, name, value)
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise NotFittedError("this ThreatMatcher is not fitted yet")

    # -- fitting ----------------------------------------------------------------

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            tau=self.tau, epochs=self.epochs, batch_size=self.batch_size,
            lr=self.lr, perturb_ratio=self.perturb_ratio,
            corpus_size=self.corpus_size, seed=self.seed,
        )

    def fit(self, X, y=None) -> "ThreatMatcher":
        """Train the matcher on a benign corpus.

        X is a store snapshot (benign neighborhoods get sampled from it,
        corpus_size of them) or a sequence of graphs taken as the corpus
        as-is. y is accepted for interface compatibility and ignored; the
        training signal is contrastive, not supervised.
        """
        if hasattr(X, "process_entities"):
            corpus = sample_benign_corpus(X, size=self.corpus_size,
                                          seed=self.seed)
        else:
            corpus = [_as_graph(g) for g in X]
        if len(corpus) < 2:
            raise ValueError("corpus must hold at least two graphs")
        cfg = self._train_config()
        model = ReprModel(d=self.d, layers=self.layers,
                          gate_threshold=self.gate_threshold, seed=self.seed)
        result = train(model, corpus, cfg)
        self.model_ = model
        self.corpus_ = corpus
        self.losses_ = list(result.losses)
        self.pos_mean_ = result.pos_mean
        self.neg_mean_ = result.neg_mean
        self.n_iter_ = len(result.losses)
        return self

    # -- scoring ----------------------------------------------------------------

    def transform(self, X) -> np.ndarray:
        """Standalone embeddings, one row per graph, no cross attention."""
        self._check_fitted()
        return np.stack([self.model_.embed(_as_graph(g)) for g in X])

    def score_samples(self, X, queries: Sequence) -> np.ndarray:
        """Best matcher score per graph against the query library."""
        self._check_fitted()
        qs = [_as_graph(q) for q in queries]
        if not qs:
            raise ValueError("query library is empty")
        gs = [_as_graph(g) for g in X]
        if not gs:
            return np.zeros(0)
        flat = self.model_.score_many([(q, g) for g in gs for q in qs])
        return flat.reshape(len(gs), len(qs)).max(axis=1)

    def predict(self, X, queries: Sequence) -> np.ndarray:
        """1 where a graph's best query score reaches theta, else 0."""
        return (self.score_samples(X, queries) >= self.theta).astype(int)

    def score(self, X, y, queries: Sequence) -> float:
        """Mean accuracy of predict against 0/1 labels."""
        y = np.asarray(y, dtype=int)
        pred = self.predict(X, queries)
        if y.shape != pred.shape:
            raise ValueError(f"label shape {y.shape} != prediction {pred.shape}")
        return float((pred == y).mean()) if y.size else 0.0

    # -- persistence --------------------------------------------------------------

    def save(self, path) -> None:
        self._check_fitted()
        save_model(self.model_, path)

    def load(self, path) -> "ThreatMatcher":
        """Attach previously saved weights, marking the estimator fitted."""
        model = load_model(path)
        self.model_ = model
        self.d = model.d
        self.layers = model.layers
        self.gate_threshold = model.gate_threshold
        self.seed = model.seed
        return self
