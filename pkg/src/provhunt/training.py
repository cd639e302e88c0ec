"""Contrastive training for the pair matcher.

The pipeline: sample a corpus of small benign neighborhoods out of a graph
store, derive one perturbed positive and one structurally distant negative
partner per corpus graph, then fit the matcher so positives score high and
negatives low under a temperature-scaled contrastive loss.

Distance between candidate partners is an approximate graph edit distance:
a linear assignment over per-node substitution costs picks a node mapping,
and the exact edit cost induced by that mapping (an upper bound on the true
minimum) is what gets reported.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .graphs import AttrGraph
from .ppg import Ppg, TraversalDir
from .vocab import OPS_BY_OBJECT_KIND, EntityKind

_BIG = 1e9


# ---------------------------------------------------------------------------
# Benign corpus sampling


def _ent_degree(snap, ent: int, cache: Optional[dict] = None) -> int:
    if cache is not None and ent in cache:
        return cache[ent]
    d = sum(1 for td in (TraversalDir.OUT, TraversalDir.IN)
            for _ in snap.neighbors(ent, td))
    if cache is not None:
        cache[ent] = d
    return d


def _bfs_ball(snap, start: int, hops: int, hi: int,
              expand_cap: Optional[int] = None,
              deg_cache: Optional[dict] = None) -> Optional[list[int]]:
    """Undirected k-hop ball in discovery order, or None once it exceeds hi.

    Nodes busier than expand_cap stay in the ball as boundary nodes but are
    not expanded, so one hub entity cannot drag in the whole store.
    """
    seen = {start}
    order = [start]
    frontier = [start]
    for _ in range(hops):
        nxt = []
        for ent in frontier:
            if expand_cap is not None and _ent_degree(snap, ent, deg_cache) > expand_cap:
                continue
            for d in (TraversalDir.OUT, TraversalDir.IN):
                for rec in snap.neighbors(ent, d):
                    if rec.other in seen:
                        continue
                    seen.add(rec.other)
                    order.append(rec.other)
                    nxt.append(rec.other)
                    if len(order) > hi:
                        return None
        frontier = nxt
    return order


def _graph_from_entities(snap, ents: list[int]) -> AttrGraph:
    """Induced attributed graph over the given entities, one node per entity
    (no name consolidation), edges deduplicated on (src, dst, op)."""
    g = AttrGraph()
    idx = {}
    for ent in ents:
        idx[ent] = g.add_node(snap.ent_name(ent), snap.ent_abs(ent))
    for ent in sorted(ents):
        for fe in snap.subject_events(ent):
            if fe.obj_ent in idx:
                g.add_edge(idx[fe.sbj_ent], idx[fe.obj_ent], fe.op, fe.ts)
    g.dedup_edges()
    return g


def sample_benign_corpus(
    g,
    size: int,
    seed: int = 0,
    hops: Sequence[int] = (2, 3, 4),
    min_nodes: int = 10,
    max_nodes: int = 30,
    max_tries_per_graph: int = 200,
    expand_cap: Optional[int] = 64,
) -> list[AttrGraph]:
    """Draw `size` neighborhood graphs whose node counts land in range.

    Start entities and hop radii are uniform; a ball outside the size window
    is rejected and resampled. Hub entities busier than expand_cap are kept
    as boundary nodes but not expanded. Raises RuntimeError when a slot
    exhausts its retry budget, which usually means the store is too small or
    too dense for the requested window.
    """
    snap = g.snapshot() if isinstance(g, Ppg) else g
    if snap.n_entities == 0:
        raise ValueError("store has no entities to sample from")
    if size < 1:
        raise ValueError("corpus size must be positive")
    rng = np.random.default_rng(seed)
    hops = tuple(hops)
    degs: dict[int, int] = {}
    out = []
    for slot in range(size):
        for _ in range(max_tries_per_graph):
            start = int(rng.integers(0, snap.n_entities))
            k = hops[int(rng.integers(0, len(hops)))]
            ball = _bfs_ball(snap, start, k, max_nodes,
                             expand_cap=expand_cap, deg_cache=degs)
            if ball is not None and min_nodes <= len(ball) <= max_nodes:
                out.append(_graph_from_entities(snap, ball))
                break
        else:
            raise RuntimeError(
                f"corpus slot {slot}: no {min_nodes}..{max_nodes} node "
                f"neighborhood found in {max_tries_per_graph} tries"
            )
    return out


# ---------------------------------------------------------------------------
# Augmentation


def _legal_edge(g: AttrGraph, rng) -> Optional[tuple[int, int, object]]:
    procs = [i for i, n in enumerate(g.nodes) if n.kind is EntityKind.PROCESS]
    if not procs:
        return None
    objs = [i for i, n in enumerate(g.nodes) if n.kind is not EntityKind.PROCESS]
    src = procs[int(rng.integers(0, len(procs)))]
    pool = objs if objs else procs
    dst = pool[int(rng.integers(0, len(pool)))]
    ops = sorted(OPS_BY_OBJECT_KIND[g.nodes[dst].kind])
    op = ops[int(rng.integers(0, len(ops)))]
    return src, dst, op


def augment_edges(g: AttrGraph, ratio: float, rng) -> AttrGraph:
    """Copy of g with ceil(ratio * |E|) random edge additions/removals.

    Additions keep the process-subject discipline and pick an op legal for
    the object's kind; removals never take the last remaining edge.
    """
    out = g.copy()
    changes = math.ceil(ratio * out.n_edges)
    have = {(e.src, e.dst, e.op) for e in out.edges}
    for _ in range(changes):
        if out.n_edges > 1 and rng.random() < 0.5:
            victim = int(rng.integers(0, out.n_edges))
            e = out.edges.pop(victim)
            have.discard((e.src, e.dst, e.op))
        else:
            for _ in range(10):
                cand = _legal_edge(out, rng)
                if cand is None:
                    break
                if cand not in have:
                    out.add_edge(cand[0], cand[1], cand[2], ts=None)
                    have.add(cand)
                    break
    return out


def _drop_nodes(g: AttrGraph, drop: set) -> AttrGraph:
    out = AttrGraph(label=g.label)
    remap = {}
    for i, n in enumerate(g.nodes):
        if i not in drop:
            remap[i] = out.add_node(n.name, n.abs)
    for e in g.edges:
        if e.src in remap and e.dst in remap:
            out.add_edge(remap[e.src], remap[e.dst], e.op, e.ts)
    return out


def augment_nodes(
    g: AttrGraph, ratio: float, rng, donor: Optional[AttrGraph] = None
) -> AttrGraph:
    """Copy of g with ceil(ratio * |V|) nodes removed or grafted in.

    Removal only ever takes file and netflow nodes; processes are the
    skeleton and stay. With a donor graph, grafting copies random donor
    nodes (plus their induced edges) and wires each one to a random local
    process with a legal op. Falls back to edge perturbation when neither
    move is possible.
    """
    count = math.ceil(ratio * g.n_nodes)
    graft = donor is not None and donor.n_nodes > 0 and bool(rng.integers(0, 2))
    if not graft:
        removable = [
            i for i, n in enumerate(g.nodes) if n.kind is not EntityKind.PROCESS
        ]
        if not removable:
            if donor is not None and donor.n_nodes > 0:
                graft = True
            else:
                return augment_edges(g, ratio, rng)
        else:
            picks = rng.choice(
                len(removable), size=min(count, len(removable)), replace=False
            )
            return _drop_nodes(g, {removable[int(i)] for i in picks})
    out = g.copy()
    take = rng.choice(donor.n_nodes, size=min(count, donor.n_nodes), replace=False)
    remap = {}
    for i in take:
        node = donor.nodes[int(i)]
        remap[int(i)] = out.add_node(node.name, node.abs)
    for e in donor.edges:
        if e.src in remap and e.dst in remap:
            out.add_edge(remap[e.src], remap[e.dst], e.op, e.ts)
    procs = [i for i, n in enumerate(g.nodes) if n.kind is EntityKind.PROCESS]
    for di, local in remap.items():
        node = out.nodes[local]
        if node.kind is EntityKind.PROCESS:
            if procs:
                ops = sorted(OPS_BY_OBJECT_KIND[EntityKind.PROCESS])
                src = procs[int(rng.integers(0, len(procs)))]
                out.add_edge(src, local, ops[int(rng.integers(0, len(ops)))], ts=None)
        elif procs:
            ops = sorted(OPS_BY_OBJECT_KIND[node.kind])
            src = procs[int(rng.integers(0, len(procs)))]
            out.add_edge(src, local, ops[int(rng.integers(0, len(ops)))], ts=None)
    return out


def augment(
    g: AttrGraph, ratio: float, rng, donor: Optional[AttrGraph] = None
) -> AttrGraph:
    """One random structure perturbation: edge edits or node edits, 50/50."""
    if not 0 < ratio <= 1:
        raise ValueError("perturbation ratio must be in (0, 1]")
    if rng.integers(0, 2) == 0:
        return augment_edges(g, ratio, rng)
    return augment_nodes(g, ratio, rng, donor=donor)


# ---------------------------------------------------------------------------
# Approximate graph edit distance

# unit costs: node insert/delete/substitute 1 each, edge insert/delete/
# substitute 1 each; node substitution is free between equal abstract types


def _pair_ops(g: AttrGraph) -> dict:
    out: dict = {}
    for e in g.edges:
        out.setdefault((e.src, e.dst), Counter())[e.op] += 1
    return out


def _degree(g: AttrGraph) -> list[int]:
    deg = [0] * g.n_nodes
    for e in g.edges:
        deg[e.src] += 1
        if e.dst != e.src:
            deg[e.dst] += 1
    return deg


def mapping_edit_cost(ga: AttrGraph, gb: AttrGraph, mapping: dict) -> int:
    """Exact edit cost induced by an injective partial node mapping a->b.

    Unmapped nodes on either side are deletions/insertions that drag their
    incident edges along; edges between mapped pairs align per ordered pair,
    cheapest first: shared ops are free, differing ops substitute, the
    remainder inserts or deletes.
    """
    used = set(mapping.values())
    if len(used) != len(mapping):
        raise ValueError("mapping is not injective")
    pa, pb = _pair_ops(ga), _pair_ops(gb)
    cost = (ga.n_nodes - len(mapping)) + (gb.n_nodes - len(used))
    for i, j in mapping.items():
        if ga.nodes[i].abs is not gb.nodes[j].abs:
            cost += 1
    for (s, t), ops in pa.items():
        if not (s in mapping and t in mapping):
            cost += sum(ops.values())
    for (s, t), ops in pb.items():
        if not (s in used and t in used):
            cost += sum(ops.values())
    for i1, j1 in mapping.items():
        for i2, j2 in mapping.items():
            opsa = pa.get((i1, i2))
            opsb = pb.get((j1, j2))
            if opsa is None and opsb is None:
                continue
            if opsa is None or opsb is None:
                cost += sum((opsa or opsb).values())
                continue
            inter = sum((opsa & opsb).values())
            cost += max(sum(opsa.values()), sum(opsb.values())) - inter
    return cost


def approx_ged(ga: AttrGraph, gb: AttrGraph) -> int:
    """Upper bound on graph edit distance via linear assignment.

    The assignment matches nodes on substitution cost plus half the local
    edge-profile mismatch; the returned value is the exact cost induced by
    that node mapping, so it can overshoot but never undershoot the true
    minimum. Identical graphs in identical node order always return 0.
    """
    na, nb = ga.n_nodes, gb.n_nodes
    if na == 0 and nb == 0:
        return 0
    dega, degb = _degree(ga), _degree(gb)
    profa = [Counter() for _ in range(na)]
    profb = [Counter() for _ in range(nb)]
    for e in ga.edges:
        profa[e.src][(e.op, 0)] += 1
        profa[e.dst][(e.op, 1)] += 1
    for e in gb.edges:
        profb[e.src][(e.op, 0)] += 1
        profb[e.dst][(e.op, 1)] += 1
    dim = na + nb
    cost = np.full((dim, dim), _BIG)
    for i in range(na):
        for j in range(nb):
            mismatch = sum(((profa[i] - profb[j]) + (profb[j] - profa[i])).values())
            cost[i, j] = (ga.nodes[i].abs is not gb.nodes[j].abs) + mismatch / 2.0
        cost[i, nb + i] = 1 + dega[i]
    for j in range(nb):
        cost[na + j, j] = 1 + degb[j]
    cost[na:, nb:] = 0.0
    rows, cols = linear_sum_assignment(cost)
    mapping = {int(r): int(c) for r, c in zip(rows, cols) if r < na and c < nb}
    best = mapping_edit_cost(ga, gb, mapping)
    if na == nb:
        best = min(best, mapping_edit_cost(ga, gb, {i: i for i in range(na)}))
    return best


# ---------------------------------------------------------------------------
# Pair construction


@dataclass
class TrainPair:
    anchor: int  # corpus index
    positive: AttrGraph
    negative: int  # corpus index of the distant partner


@dataclass
class TrainConfig:
    tau: float = 0.1
    epochs: int = 100
    batch_size: int = 16
    lr: float = 0.001
    perturb_ratio: float = 0.2
    corpus_size: int = 1500
    seed: int = 0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not 0 < self.perturb_ratio <= 1:
            raise ValueError("perturb_ratio must be in (0, 1]")
        if self.corpus_size < 2:
            raise ValueError("corpus_size must be at least 2")


def build_pairs(
    corpus: Sequence[AttrGraph],
    cfg: TrainConfig,
    rng,
    scan_limit: int = 50,
) -> list[TrainPair]:
    """One positive and one distant negative partner per corpus graph.

    A partner qualifies when its approximate edit distance from the anchor
    exceeds the cheaper of tearing either graph down completely. If a
    bounded random scan finds none, the most distant candidate scanned is
    taken and a warning is emitted.
    """
    if len(corpus) < 2:
        raise ValueError("need at least two corpus graphs to build pairs")
    sizes = [g.n_nodes + g.n_edges for g in corpus]
    pairs = []
    for a, anchor in enumerate(corpus):
        donor = corpus[_other_index(rng, len(corpus), a)]
        pos = augment(anchor, cfg.perturb_ratio, rng, donor=donor)
        best_idx, best_ged = -1, -1.0
        chosen = -1
        start = int(rng.integers(0, len(corpus)))
        for off in range(min(scan_limit, len(corpus))):
            b = (start + off) % len(corpus)
            if b == a:
                continue
            ged = approx_ged(anchor, corpus[b])
            if ged > min(sizes[a], sizes[b]):
                chosen = b
                break
            if ged > best_ged:
                best_idx, best_ged = b, ged
        if chosen < 0:
            warnings.warn(
                f"anchor {a}: no partner beat the distance floor; "
                f"falling back to the most distant scanned (ged={best_ged})"
            )
            chosen = best_idx
        pairs.append(TrainPair(anchor=a, positive=pos, negative=chosen))
    return pairs


def _other_index(rng, n: int, not_this: int) -> int:
    pick = int(rng.integers(0, n - 1))
    return pick + (pick >= not_this)


# ---------------------------------------------------------------------------
# Loss


def contrastive_loss(pos_scores, neg_scores, tau: float):
    """Temperature-scaled contrastive objective over score sets.

    pos_scores: (B,) one positive score per anchor. neg_scores: list of B
    arrays, the negative scores of each anchor (at least one each). Returns
    (loss, dpos, dnegs) where the gradients are with respect to the raw
    scores. Loss = -mean_i [pos_i/tau - logsumexp_k(neg_ik/tau)].
    """
    pos = np.asarray(pos_scores, dtype=np.float64)
    b = pos.shape[0]
    if b == 0:
        raise ValueError("no positive scores")
    if len(neg_scores) != b:
        raise ValueError("one negative score set per anchor required")
    loss = 0.0
    dpos = np.full(b, -1.0 / (b * tau))
    dnegs = []
    for i in range(b):
        negs = np.asarray(neg_scores[i], dtype=np.float64)
        if negs.size == 0:
            raise ValueError(f"anchor {i} has an empty negative set")
        z = negs / tau
        zmax = z.max()
        lse = zmax + math.log(np.exp(z - zmax).sum())
        loss -= pos[i] / tau - lse
        soft = np.exp(z - lse)
        dnegs.append(soft / (b * tau))
    return loss / b, dpos, dnegs


# ---------------------------------------------------------------------------
# Optimizer and training loop


class Adam:
    """Standard Adam over a dict of parameter arrays, updated in place."""

    def __init__(self, params: dict, lr: float, b1=0.9, b2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2, self.eps = b1, b2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * (g * g)
            mhat = self.m[k] / bc1
            vhat = self.v[k] / bc2
            p -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype)


@dataclass
class TrainResult:
    losses: list[float]
    config: TrainConfig
    pos_mean: float = 0.0
    neg_mean: float = 0.0
    pairs: list[TrainPair] = field(default_factory=list, repr=False)


def train(model, corpus: Sequence[AttrGraph], cfg: TrainConfig) -> TrainResult:
    """Fit the matcher on contrastive pairs drawn from a benign corpus.

    Mutates the model's parameters in place and returns the per-epoch mean
    loss curve. Pair construction, shuffling, and augmentation all derive
    from cfg.seed, so a rerun reproduces the same curve bit for bit.
    """
    rng = np.random.default_rng(cfg.seed)
    pairs = build_pairs(corpus, cfg, rng)
    anchor_t = [model.prepare(g) for g in corpus]
    pos_t = [model.prepare(p.positive) for p in pairs]
    opt = Adam(model.params, lr=cfg.lr)
    losses = []
    order = np.arange(len(pairs))
    last_pos = last_neg = 0.0
    for epoch in range(cfg.epochs):
        rng.shuffle(order)
        total = 0.0
        nb = 0
        pos_acc: list[float] = []
        neg_acc: list[float] = []
        for lo in range(0, len(order), cfg.batch_size):
            idxs = order[lo : lo + cfg.batch_size]
            b = len(idxs)
            left = [anchor_t[pairs[i].anchor] for i in idxs] * 2
            right = [pos_t[i] for i in idxs] + [
                anchor_t[pairs[i].negative] for i in idxs
            ]
            try:
                scores, _, _, cache = model.forward_pair_batch(
                    model.pack(left), model.pack(right)
                )
            except FloatingPointError as err:
                raise RuntimeError(
                    f"training diverged at epoch {epoch} batch {nb}: {err}"
                ) from err
            pos_scores = scores[:b]
            neg_scores = scores[b:]
            loss, dpos, dnegs = contrastive_loss(
                pos_scores, [np.array([s]) for s in neg_scores], cfg.tau
            )
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch} batch {nb}"
                )
            dscores = np.concatenate([dpos, np.array([d[0] for d in dnegs])])
            grads = model.backward_pair_batch(cache, dscores)
            opt.step(grads)
            total += loss
            nb += 1
            pos_acc.extend(pos_scores.tolist())
            neg_acc.extend(neg_scores.tolist())
        losses.append(total / nb)
        last_pos = float(np.mean(pos_acc))
        last_neg = float(np.mean(neg_acc))
    return TrainResult(
        losses=losses, config=cfg, pos_mean=last_pos, neg_mean=last_neg, pairs=pairs
    )


def score_pairs(model, corpus: Sequence[AttrGraph], pairs: Sequence[TrainPair]):
    """(positive scores, negative scores) for a pair set under a model."""
    pos = model.score_many([(corpus[p.anchor], p.positive) for p in pairs])
    neg = model.score_many([(corpus[p.anchor], corpus[p.negative]) for p in pairs])
    return pos, neg
