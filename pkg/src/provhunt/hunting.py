"""Query-driven hunting over a provenance store.

Given a set of alert entities and a library of known-bad query graphs, pull
the rule-gated neighborhood of each alert out of the store, score every
neighborhood against every query with the matcher, and flag the ones whose
best score clears the decision threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .graphs import to_attr_graph
from .ppg import Ppg
from .sampler import SamplingConfig, ThreatGraph, sample


@dataclass
class HuntVerdict:
    """One sampled neighborhood's outcome against the whole query library."""

    graph_id: int
    best_query: int
    score: float
    flagged: bool
    per_query: list[float]
    label: Optional[bool] = None

    def to_dict(self) -> dict:
        out = {
            "graph_id": self.graph_id,
            "best_query": self.best_query,
            "score": self.score,
            "flagged": self.flagged,
            "per_query": self.per_query,
        }
        if self.label is not None:
            out["label"] = self.label
        return out


@dataclass
class HuntReport:
    """Verdicts in descending score order plus the knobs that produced them.

    Metrics appear only when the caller labeled every sampled graph.
    """

    verdicts: list[HuntVerdict]
    theta: float
    k: int
    model_digest: str
    n_graphs: int
    n_flagged: int
    metrics: Optional[dict] = None
    threat_graphs: list[ThreatGraph] = field(default_factory=list, repr=False)

    @property
    def any_flagged(self) -> bool:
        return self.n_flagged > 0

    def to_dict(self) -> dict:
        out = {
            "theta": self.theta,
            "k": self.k,
            "model_digest": self.model_digest,
            "n_graphs": self.n_graphs,
            "n_flagged": self.n_flagged,
            "verdicts": [v.to_dict() for v in self.verdicts],
        }
        if self.metrics is not None:
            out["metrics"] = self.metrics
        return out


def evaluate(scores, labels, theta: float) -> dict:
    """Confusion metrics at the threshold plus a rank-based AUC.

    Ties in score get averaged ranks, so a constant scorer lands at 0.5.
    recall is None without positives, fpr is None without negatives, and
    auc needs one of each.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    if s.size == 0:
        raise ValueError("nothing to evaluate")
    pred = s >= theta
    tp = int((pred & y).sum())
    fp = int((pred & ~y).sum())
    fn = int((~pred & y).sum())
    tn = int((~pred & ~y).sum())
    npos, nneg = tp + fn, fp + tn
    auc = None
    if npos and nneg:
        ranks = rankdata(s)  # average rank on ties
        auc = (ranks[y].sum() - npos * (npos + 1) / 2.0) / (npos * nneg)
    return {
        "recall": tp / npos if npos else None,
        "fpr": fp / nneg if nneg else None,
        "accuracy": (tp + tn) / s.size,
        "auc": auc,
    }


def _score_matrix(model, queries, graphs, batch: int = 64) -> np.ndarray:
    """(n_graphs, n_queries) matcher scores."""
    pairs = [(q, g) for g in graphs for q in queries]
    flat = model.score_many(pairs, batch=batch)
    return flat.reshape(len(graphs), len(queries))


def hunt(
    g,
    pois: Sequence[int],
    queries: Sequence,
    model,
    theta: float = 0.3,
    k: int = 2,
    rules: str = "default",
    max_nodes: int = 5000,
    labeler: Optional[Callable[[ThreatGraph], Optional[bool]]] = None,
) -> HuntReport:
    """Sample the neighborhoods of the given alert entities and score them.

    pois are entity indices into the store. Raises on an empty POI or query
    set; to sweep every process instead, use hunt_exhaustive. The optional
    labeler maps each sampled graph to its ground truth; metrics are
    attached only when it labels every graph (None anywhere suppresses
    them).
    """
    pois = list(pois)
    if not pois:
        raise ValueError(
            "no alert entities given; hunt_exhaustive sweeps every process"
        )
    qgraphs = [to_attr_graph(q) for q in queries]
    if not qgraphs:
        raise ValueError("query library is empty")
    snap = g.snapshot() if isinstance(g, Ppg) else g
    cfg = SamplingConfig(k=k, rules=rules, max_nodes=max_nodes)
    tgs = sample(snap, pois, cfg)
    mat = _score_matrix(model, qgraphs, [tg.graph for tg in tgs])
    verdicts = []
    labels = []
    for i, tg in enumerate(tgs):
        row = mat[i]
        best = int(np.argmax(row))
        score = float(row[best])
        label = labeler(tg) if labeler is not None else None
        labels.append(label)
        verdicts.append(
            HuntVerdict(
                graph_id=i,
                best_query=best,
                score=score,
                flagged=bool(score >= theta),
                per_query=[float(x) for x in row],
                label=label,
            )
        )
    metrics = None
    if labeler is not None and all(lb is not None for lb in labels):
        metrics = evaluate([v.score for v in verdicts], labels, theta)
    verdicts.sort(key=lambda v: (-v.score, v.graph_id))
    return HuntReport(
        verdicts=verdicts,
        theta=theta,
        k=k,
        model_digest=model.digest(),
        n_graphs=len(tgs),
        n_flagged=sum(v.flagged for v in verdicts),
        metrics=metrics,
        threat_graphs=tgs,
    )


def hunt_exhaustive(
    g,
    queries: Sequence,
    model,
    theta: float = 0.3,
    k: int = 2,
    stride: int = 1,
    rules: str = "default",
    max_nodes: int = 5000,
    labeler: Optional[Callable[[ThreatGraph], Optional[bool]]] = None,
) -> HuntReport:
    """Hunt with every process entity as an alert, optionally strided."""
    if stride < 1:
        raise ValueError("stride must be at least 1")
    snap = g.snapshot() if isinstance(g, Ppg) else g
    procs = snap.process_entities()[::stride]
    if not procs:
        raise ValueError("store has no process entities to sweep")
    return hunt(
        snap, procs, queries, model,
        theta=theta, k=k, rules=rules, max_nodes=max_nodes, labeler=labeler,
    )
