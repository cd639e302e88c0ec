"""Graph-pair matching model: message passing with cross-graph attention.

Per layer, each node aggregates (receiver one-hot, sender one-hot, edge
vector) messages from its distinct undirected neighbors through a bias-free
linear map and a ReLU. Nodes whose directed degree exceeds the gate
threshold then exchange attention messages with the gated nodes of the other
graph (softmax over dot-product scores); everyone else receives a zero
message. A two-layer MLP (the only place biases live) fuses the two signals.
Sum pooling over nodes yields the graph embedding; pairs are scored by
cosine similarity.

Everything runs batched over padded node axes so training can push whole
pair batches through numpy at once; a single pair is just a batch of one.
The backward pass is hand-written against the cached forward state and is
exact, which the test suite checks against central finite differences.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .graphs import AttrGraph
from .vocab import ABS_CODE, N_ABS_TYPES, N_OP_CODES, WIRE_CODE

EDGE_DIM = N_OP_CODES + 1  # op multi-hot plus one direction bit
CKPT_MAGIC = b"PHMN"
CKPT_VERSION = 1


@dataclass
class GraphFeatures:
    """Raw feature view: one-hot node matrix and per-pair op vectors.

    `e[(s, t)]` is the 16-wide multi-hot of ops on edges between s and t in
    either direction; it exists for every ordered adjacent pair, so
    e[(s, t)] and e[(t, s)] hold the same bits.
    """

    h: np.ndarray
    e: dict


def init_features(g: AttrGraph) -> GraphFeatures:
    n = g.n_nodes
    h = np.zeros((n, N_ABS_TYPES))
    for i, node in enumerate(g.nodes):
        h[i, ABS_CODE[node.abs]] = 1.0
    e: dict = {}
    for edge in g.edges:
        for s, t in ((edge.src, edge.dst), (edge.dst, edge.src)):
            vec = e.get((s, t))
            if vec is None:
                vec = np.zeros(N_OP_CODES)
                e[(s, t)] = vec
            vec[WIRE_CODE[edge.op]] = 1.0
    return GraphFeatures(h=h, e=e)


@dataclass
class GraphTensors:
    """Model-ready arrays for one graph."""

    n: int
    h0: np.ndarray  # (n, 14)
    a: np.ndarray  # (n, n) undirected 0/1, self-loop on the diagonal
    deg: np.ndarray  # (n,) distinct-neighbor counts = row sums of a
    esum: np.ndarray  # (n, 17) per-receiver sum of [op multi-hot || dir bit]
    gate: np.ndarray  # (n,) bool, directed distinct degree > threshold


def prepare(g: AttrGraph, gate_threshold: int = 3) -> GraphTensors:
    if g.n_nodes == 0:
        raise ValueError("cannot featurize an empty graph")
    n = g.n_nodes
    feats = init_features(g)
    a = np.zeros((n, n))
    out_nbrs: list[set] = [set() for _ in range(n)]
    in_nbrs: list[set] = [set() for _ in range(n)]
    for edge in g.edges:
        a[edge.src, edge.dst] = 1.0
        a[edge.dst, edge.src] = 1.0
        out_nbrs[edge.src].add(edge.dst)
        in_nbrs[edge.dst].add(edge.src)
    deg = a.sum(axis=1)
    esum = np.zeros((n, EDGE_DIM))
    for (s, t), vec in feats.e.items():
        # one message per distinct neighbor pair; dir bit marks sender->receiver
        esum[t, :N_OP_CODES] += vec
        esum[t, N_OP_CODES] += 1.0 if t in out_nbrs[s] else 0.0
    gate = np.array(
        [len(out_nbrs[i]) + len(in_nbrs[i]) > gate_threshold for i in range(n)]
    )
    return GraphTensors(n=n, h0=feats.h, a=a, deg=deg, esum=esum, gate=gate)


@dataclass
class Packed:
    """A padded batch of GraphTensors."""

    n: np.ndarray  # (B,)
    mask: np.ndarray  # (B, N, 1)
    h0: np.ndarray  # (B, N, 14)
    a: np.ndarray  # (B, N, N)
    deg: np.ndarray  # (B, N, 1)
    esum: np.ndarray  # (B, N, 17)
    gate: np.ndarray  # (B, N) bool

    @property
    def batch(self) -> int:
        return self.h0.shape[0]


def pack(graphs: Sequence[GraphTensors], dtype=np.float64) -> Packed:
    b = len(graphs)
    nmax = max(g.n for g in graphs)
    mask = np.zeros((b, nmax, 1), dtype=dtype)
    h0 = np.zeros((b, nmax, N_ABS_TYPES), dtype=dtype)
    a = np.zeros((b, nmax, nmax), dtype=dtype)
    deg = np.zeros((b, nmax, 1), dtype=dtype)
    esum = np.zeros((b, nmax, EDGE_DIM), dtype=dtype)
    gate = np.zeros((b, nmax), dtype=bool)
    for i, g in enumerate(graphs):
        k = g.n
        mask[i, :k] = 1.0
        h0[i, :k] = g.h0
        a[i, :k, :k] = g.a
        deg[i, :k, 0] = g.deg
        esum[i, :k] = g.esum
        gate[i, :k] = g.gate
    return Packed(
        n=np.array([g.n for g in graphs]), mask=mask, h0=h0, a=a, deg=deg,
        esum=esum, gate=gate,
    )


class PairScore(NamedTuple):
    eq: np.ndarray
    ep: np.ndarray
    score: float


def _relu(x):
    return np.maximum(x, 0.0)


def _attend(hq, hs, gate_q, gate_s):
    """Attention messages into hq's gated nodes from hs's gated nodes.

    Returns (mu, w): the per-receiver message and the softmax weights.
    Rows belonging to ungated receivers, or batches whose sender side has
    no gated nodes, come out as exact zeros.
    """
    scores = hq @ hs.transpose(0, 2, 1)  # (B, Nq, Ns)
    sender = gate_s[:, None, :]
    shifted = np.where(sender, scores, -np.inf)
    smax = shifted.max(axis=2, keepdims=True)
    smax_safe = np.where(np.isfinite(smax), smax, 0.0)
    # exp only sees masked-and-shifted values (<= 0), so it cannot overflow
    expd = np.exp(np.where(sender, scores - smax_safe, -np.inf))
    denom = expd.sum(axis=2, keepdims=True)
    recv = gate_q[:, :, None] & (denom > 0)
    w = (expd / (denom + (denom == 0))) * recv
    return w @ hs, w


def _attend_back(dmu, w, hq, hs):
    dw = dmu @ hs.transpose(0, 2, 1)
    dhs = w.transpose(0, 2, 1) @ dmu
    inner = (dw * w).sum(axis=2, keepdims=True)
    ds = w * (dw - inner)
    dhq = ds @ hs
    dhs += ds.transpose(0, 2, 1) @ hq
    return dhq, dhs


def _outer_sum(x, y):
    """sum_b x_b^T y_b for (B, N, i) x (B, N, j) -> (i, j), via one gemm."""
    return x.reshape(-1, x.shape[2]).T @ y.reshape(-1, y.shape[2])


class ReprModel:
    """Three-layer pair matcher with per-layer parameters.

    Weights initialize uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)] where
    fan_in is the full input width of the (conceptually single) linear map
    each block belongs to; biases start at zero. Construction is seeded and
    deterministic.
    """

    def __init__(
        self,
        d: int = 128,
        layers: int = 3,
        gate_threshold: int = 3,
        seed: int = 0,
        dtype=np.float64,
    ):
        self.d = d
        self.layers = layers
        self.gate_threshold = gate_threshold
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.in_dim = N_ABS_TYPES
        self.edge_dim = EDGE_DIM
        self.params: dict[str, np.ndarray] = {}
        rng = np.random.default_rng(seed)
        for l in range(layers):
            din = self.in_dim if l == 0 else d
            fan = 2 * din + self.edge_dim  # the stacked message map
            self.params[f"l{l}.wt"] = self._init(rng, (din, d), fan)
            self.params[f"l{l}.ws"] = self._init(rng, (din, d), fan)
            self.params[f"l{l}.we"] = self._init(rng, (self.edge_dim, d), fan)
            self.params[f"l{l}.m1"] = self._init(rng, (2 * d, d), 2 * d)
            self.params[f"l{l}.b1"] = np.zeros(d, dtype=self.dtype)
            self.params[f"l{l}.m2"] = self._init(rng, (d, d), d)
            self.params[f"l{l}.b2"] = np.zeros(d, dtype=self.dtype)

    def _init(self, rng, shape, fan_in):
        lim = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-lim, lim, size=shape).astype(self.dtype)

    @property
    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def digest(self) -> str:
        """Short stable fingerprint of hyperparameters and weights."""
        h = hashlib.sha256()
        h.update(
            f"{self.d}|{self.layers}|{self.gate_threshold}|{self.dtype.name}".encode()
        )
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params[name]).tobytes())
        return h.hexdigest()[:16]

    def describe(self) -> dict:
        return {
            "d": self.d,
            "layers": self.layers,
            "gate_threshold": self.gate_threshold,
            "seed": self.seed,
            "dtype": self.dtype.name,
            "param_count": self.param_count,
        }

    # -- graph plumbing ------------------------------------------------------

    def prepare(self, g: AttrGraph) -> GraphTensors:
        return prepare(g, self.gate_threshold)

    def pack(self, graphs: Sequence) -> Packed:
        tensors = [g if isinstance(g, GraphTensors) else self.prepare(g) for g in graphs]
        return pack(tensors, dtype=self.dtype)

    # -- forward -------------------------------------------------------------

    def _intra(self, l: int, pk: Packed, h):
        p = self.params
        degh = pk.deg * h
        ah = pk.a @ h
        z = degh @ p[f"l{l}.wt"] + ah @ p[f"l{l}.ws"] + pk.esum @ p[f"l{l}.we"]
        return z, _relu(z), degh, ah

    def _mlp(self, l: int, hp, mu, mask):
        p = self.params
        x = np.concatenate([hp, mu], axis=2)
        u1 = x @ p[f"l{l}.m1"] + p[f"l{l}.b1"]
        h1 = _relu(u1)
        out = (h1 @ p[f"l{l}.m2"] + p[f"l{l}.b2"]) * mask
        return out, x, u1, h1

    def forward_pair_batch(self, pa: Packed, pb: Packed, cross: bool = True):
        """Score B pairs; returns (scores, Ea, Eb, cache)."""
        ha, hb = pa.h0, pb.h0
        layer_cache = []
        for l in range(self.layers):
            za, hpa, degha, aha = self._intra(l, pa, ha)
            zb, hpb, deghb, ahb = self._intra(l, pb, hb)
            if cross:
                mua, wa = _attend(hpa, hpb, pa.gate, pb.gate)
                mub, wb = _attend(hpb, hpa, pb.gate, pa.gate)
            else:
                mua = np.zeros_like(hpa)
                mub = np.zeros_like(hpb)
                wa = wb = None
            na, xa, u1a, h1a = self._mlp(l, hpa, mua, pa.mask)
            nb, xb, u1b, h1b = self._mlp(l, hpb, mub, pb.mask)
            layer_cache.append(
                dict(
                    ha=ha, hb=hb, za=za, zb=zb, hpa=hpa, hpb=hpb,
                    degha=degha, aha=aha, deghb=deghb, ahb=ahb,
                    wa=wa, wb=wb, xa=xa, xb=xb, u1a=u1a, u1b=u1b,
                    h1a=h1a, h1b=h1b,
                )
            )
            ha, hb = na, nb
        ea = (ha * pa.mask).sum(axis=1)
        eb = (hb * pb.mask).sum(axis=1)
        if not (np.all(np.isfinite(ea)) and np.all(np.isfinite(eb))):
            raise FloatingPointError("non-finite activation in pair forward")
        norm_a = np.linalg.norm(ea, axis=1)
        norm_b = np.linalg.norm(eb, axis=1)
        dot = (ea * eb).sum(axis=1)
        nprod = norm_a * norm_b
        ok = nprod > 0
        # a zero embedding (edgeless graph under zero biases) scores 0
        # against anything and the pair is treated as constant in backward
        scores = np.where(ok, dot / np.where(ok, nprod, 1.0), 0.0)
        if not np.all(np.isfinite(scores)):
            raise FloatingPointError("non-finite activation in pair forward")
        cache = dict(
            pa=pa, pb=pb, cross=cross, layers=layer_cache,
            ea=ea, eb=eb, na=norm_a, nb=norm_b, dot=dot, ok=ok, scores=scores,
        )
        return scores, ea, eb, cache

    def forward_single_batch(self, pk: Packed):
        """Embeddings without a partner graph: attention messages are zero."""
        h = pk.h0
        for l in range(self.layers):
            _, hp, _, _ = self._intra(l, pk, h)
            h, _, _, _ = self._mlp(l, hp, np.zeros_like(hp), pk.mask)
        e = (h * pk.mask).sum(axis=1)
        if not np.all(np.isfinite(e)):
            raise FloatingPointError("non-finite activation in embed")
        return e

    def forward_pair(self, ga, gb, cross: bool = True) -> PairScore:
        pa = self.pack([ga])
        pb = self.pack([gb])
        scores, ea, eb, _ = self.forward_pair_batch(pa, pb, cross=cross)
        return PairScore(ea[0], eb[0], float(scores[0]))

    def embed(self, g) -> np.ndarray:
        return self.forward_single_batch(self.pack([g]))[0]

    def score_many(self, pairs, batch: int = 64) -> np.ndarray:
        """Cosine scores for a list of (query, candidate) graph pairs."""
        out = np.zeros(len(pairs))
        for lo in range(0, len(pairs), batch):
            chunk = pairs[lo : lo + batch]
            pa = self.pack([p[0] for p in chunk])
            pb = self.pack([p[1] for p in chunk])
            scores, _, _, _ = self.forward_pair_batch(pa, pb)
            out[lo : lo + len(chunk)] = scores
        return out

    # -- backward ------------------------------------------------------------

    def backward_pair_batch(self, cache, dscores) -> dict[str, np.ndarray]:
        """Exact parameter gradients for the cached forward of B pairs.

        dscores is the upstream gradient, one scalar per pair.
        """
        p = self.params
        pa, pb = cache["pa"], cache["pb"]
        ea, eb = cache["ea"], cache["eb"]
        na, nb, dot, ok = cache["na"], cache["nb"], cache["dot"], cache["ok"]
        ds = np.asarray(dscores, dtype=self.dtype) * ok

        # cosine backward; zero-embedding pairs were scored as the constant 0
        inv = 1.0 / np.where(ok, na * nb, 1.0)
        s = dot * inv
        na2 = np.where(ok, na * na, 1.0)
        nb2 = np.where(ok, nb * nb, 1.0)
        dea = ds[:, None] * (eb * inv[:, None] - (s / na2)[:, None] * ea)
        deb = ds[:, None] * (ea * inv[:, None] - (s / nb2)[:, None] * eb)

        dha = dea[:, None, :] * pa.mask
        dhb = deb[:, None, :] * pb.mask

        grads = {k: np.zeros_like(v) for k, v in p.items()}
        for l in range(self.layers - 1, -1, -1):
            c = cache["layers"][l]
            dhpa, dmua = self._mlp_back(l, grads, c["xa"], c["u1a"], c["h1a"], dha, pa.mask)
            dhpb, dmub = self._mlp_back(l, grads, c["xb"], c["u1b"], c["h1b"], dhb, pb.mask)
            if cache["cross"]:
                dq, dsnd = _attend_back(dmua, c["wa"], c["hpa"], c["hpb"])
                dhpa += dq
                dhpb += dsnd
                dq, dsnd = _attend_back(dmub, c["wb"], c["hpb"], c["hpa"])
                dhpb += dq
                dhpa += dsnd
            dha = self._intra_back(l, grads, pa, c["za"], c["degha"], c["aha"], c["ha"], dhpa)
            dhb = self._intra_back(l, grads, pb, c["zb"], c["deghb"], c["ahb"], c["hb"], dhpb)
        for k, gr in grads.items():
            if not np.all(np.isfinite(gr)):
                raise FloatingPointError(f"non-finite gradient for {k}")
        return grads

    def _mlp_back(self, l, grads, x, u1, h1, dout, mask):
        p = self.params
        dout = dout * mask
        grads[f"l{l}.b2"] += dout.sum(axis=(0, 1))
        grads[f"l{l}.m2"] += _outer_sum(h1, dout)
        dh1 = dout @ p[f"l{l}.m2"].T
        du1 = dh1 * (u1 > 0)
        grads[f"l{l}.b1"] += du1.sum(axis=(0, 1))
        grads[f"l{l}.m1"] += _outer_sum(x, du1)
        dx = du1 @ p[f"l{l}.m1"].T
        return dx[:, :, : self.d], dx[:, :, self.d :]

    def _intra_back(self, l, grads, pk: Packed, z, degh, ah, h_in, dhp):
        p = self.params
        dz = dhp * (z > 0)
        grads[f"l{l}.wt"] += _outer_sum(degh, dz)
        grads[f"l{l}.ws"] += _outer_sum(ah, dz)
        grads[f"l{l}.we"] += _outer_sum(pk.esum, dz)
        dh = pk.deg * (dz @ p[f"l{l}.wt"].T) + pk.a @ (dz @ p[f"l{l}.ws"].T)
        return dh


# ---------------------------------------------------------------------------
# Checkpoints


def save_model(m: ReprModel, path: str) -> None:
    dtype_code = {"float32": b"f", "float64": b"d"}[m.dtype.name]
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<HcIIIIIq", CKPT_VERSION, dtype_code, m.d, m.layers,
                             m.gate_threshold, m.in_dim, m.edge_dim, m.seed))
        fh.write(struct.pack("<I", len(m.params)))
        for name in sorted(m.params):
            arr = m.params[name]
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_model(path: str) -> ReprModel:
    with open(path, "rb") as fh:
        if fh.read(4) != CKPT_MAGIC:
            raise ValueError("not a model checkpoint")
        version, dtype_code, d, layers, gate, in_dim, edge_dim, seed = struct.unpack(
            "<HcIIIIIq", fh.read(struct.calcsize("<HcIIIIIq"))
        )
        if version != CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        dtype = {b"f": np.float32, b"d": np.float64}[dtype_code]
        m = ReprModel(d=d, layers=layers, gate_threshold=gate, seed=seed, dtype=dtype)
        if (m.in_dim, m.edge_dim) != (in_dim, edge_dim):
            raise ValueError("checkpoint feature widths do not match this build")
        (count,) = struct.unpack("<I", fh.read(4))
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            n_bytes = int(np.prod(shape)) * np.dtype(dtype).itemsize
            arr = np.frombuffer(fh.read(n_bytes), dtype=dtype).reshape(shape).copy()
            if name not in m.params or m.params[name].shape != arr.shape:
                raise ValueError(f"unexpected parameter {name} in checkpoint")
            m.params[name] = arr
    return m
