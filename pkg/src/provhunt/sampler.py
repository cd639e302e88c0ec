"""Rule-gated adaptive BFS that grows threat graphs around points of interest.

Expansion from a node is admitted edge by edge: an incident edge whose far
endpoint passes the interaction rule table (first matching row wins) adds
that endpoint to the frontier. Hops across fork edges are free, reaching
another point of interest resets the depth budget, and everything else
consumes one of the k hops. Per-seed subgraphs that share any node are merged
afterwards, and nodes with the same normalized name and abstract type inside
a merged graph are consolidated into one.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

from .graphs import AttrGraph, graph_from_dict, graph_to_dict, to_attr_graph
from .ppg import Ppg, Snapshot, TraversalDir
from .vocab import AbsType, EdgeOp, abs_sets, normalize_name

_P, _F, _N = abs_sets()


class NodeView(NamedTuple):
    abs: AbsType
    exp: int


@dataclass(frozen=True)
class RuleSpec:
    """One row of the interaction table. None fields are unconstrained."""

    rule_id: str
    ops: Optional[frozenset] = None
    u_in: Optional[frozenset] = None
    u_not_in: Optional[frozenset] = None
    v_in: Optional[frozenset] = None
    v_not_in: Optional[frozenset] = None
    v_exp: Optional[int] = None

    def matches(self, v: NodeView, u: NodeView, op: EdgeOp) -> bool:
        if self.ops is not None and op not in self.ops:
            return False
        if self.u_in is not None and u.abs not in self.u_in:
            return False
        if self.u_not_in is not None and u.abs in self.u_not_in:
            return False
        if self.v_in is not None and v.abs not in self.v_in:
            return False
        if self.v_not_in is not None and v.abs in self.v_not_in:
            return False
        if self.v_exp is not None and v.exp != self.v_exp:
            return False
        return True


_SEND_RECV = frozenset({EdgeOp.SEND, EdgeOp.RECV})
_WRITEISH = frozenset({EdgeOp.MODIFY, EdgeOp.WRITE, EdgeOp.LINK, EdgeOp.RENAME})

RULE_TABLE: tuple[RuleSpec, ...] = (
    RuleSpec("R1", ops=_SEND_RECV, u_in=_N, v_not_in=frozenset({AbsType.WEB_PROCESS}), v_exp=1),
    RuleSpec("R2", ops=_SEND_RECV, u_in=_N, v_in=_P, v_exp=0),
    RuleSpec("R3", u_not_in=frozenset({AbsType.UNKNOWN_FILE}), v_in=_P, v_exp=0),
    # R4 is structurally covered by R3 under first-match (a process candidate
    # is never an unknown_file); kept as its own row for auditability.
    RuleSpec("R4", u_in=_P, v_in=_P, v_exp=0),
    RuleSpec(
        "R5",
        ops=_WRITEISH,
        u_in=frozenset({AbsType.SYS_FILE, AbsType.LIB_FILE}),
        v_in=_P,
        v_exp=1,
    ),
    RuleSpec(
        "R6",
        ops=frozenset({EdgeOp.MODIFY}),
        u_in=frozenset({AbsType.SYS_PROCESS, AbsType.SERV_PROCESS}),
        v_in=_P,
        v_exp=1,
    ),
    RuleSpec("R7", u_in=frozenset({AbsType.CFG_FILE}), v_in=_P, v_exp=1),
    RuleSpec(
        "R8",
        ops=_WRITEISH,
        u_in=_P,
        v_in=frozenset({AbsType.SYS_FILE, AbsType.LIB_FILE, AbsType.CFG_FILE}),
        v_exp=1,
    ),
    RuleSpec("R9", u_in=_P, v_in=_F, v_exp=0),
    RuleSpec("R10", ops=_SEND_RECV, u_in=_P, v_in=_N),
)

RULE_SETS: dict[str, tuple[RuleSpec, ...]] = {"default": RULE_TABLE}


def rule_allows(
    v: NodeView, u: NodeView, op: EdgeOp, table: Sequence[RuleSpec] = RULE_TABLE
) -> Optional[str]:
    """First rule row admitting the edge from v's point of view, else None."""
    for rule in table:
        if rule.matches(v, u, op):
            return rule.rule_id
    return None


@dataclass
class SamplingConfig:
    k: int = 2
    rules: str = "default"
    max_nodes: int = 5000

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.rules not in RULE_SETS:
            raise ValueError(f"unknown rule set {self.rules!r}")
        if self.max_nodes < 1:
            raise ValueError("max_nodes must be positive")

    @property
    def table(self) -> tuple[RuleSpec, ...]:
        return RULE_SETS[self.rules]


@dataclass
class ThreatGraph:
    """A sampled attack neighborhood plus its provenance back-references.

    ppg_nodes[i] lists the store entity indices consolidated into graph
    node i; seeds are the points of interest this graph grew from.
    """

    graph: AttrGraph
    ppg_nodes: list[list[int]] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)
    truncated: bool = False

    def to_dict(self) -> dict:
        doc = graph_to_dict(self.graph)
        doc["annex"] = {
            "ppg_nodes": [list(ents) for ents in self.ppg_nodes],
            "seeds": list(self.seeds),
            "truncated": self.truncated,
        }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ThreatGraph":
        g = graph_from_dict(doc)
        annex = doc.get("annex") or {}
        return cls(
            graph=g,
            ppg_nodes=[list(x) for x in annex.get("ppg_nodes", [])],
            seeds=list(annex.get("seeds", [])),
            truncated=bool(annex.get("truncated", False)),
        )


class _Expander:
    """Per-call caches over one snapshot: node views, incident-edge
    enumerations, and fork partners."""

    def __init__(self, snap: Snapshot, table: Sequence[RuleSpec]):
        self.snap = snap
        self.table = table
        self._views: dict[int, NodeView] = {}
        self._enum: dict[int, list[tuple[int, EdgeOp]]] = {}
        self._forks: dict[int, frozenset] = {}

    def view(self, ent: int) -> NodeView:
        v = self._views.get(ent)
        if v is None:
            v = NodeView(self.snap.ent_abs(ent), self.snap.ent_exp(ent))
            self._views[ent] = v
        return v

    def enum(self, ent: int) -> list[tuple[int, EdgeOp]]:
        e = self._enum.get(ent)
        if e is None:
            e = [
                (r.other, r.op)
                for d in (TraversalDir.OUT, TraversalDir.IN)
                for r in self.snap.neighbors(ent, d)
            ]
            self._enum[ent] = e
        return e

    def forks(self, ent: int) -> frozenset:
        f = self._forks.get(ent)
        if f is None:
            f = frozenset(
                r.other
                for d in (TraversalDir.OUT, TraversalDir.IN)
                for r in self.snap.neighbors(ent, d)
                if r.op is EdgeOp.FORK
            )
            self._forks[ent] = f
        return f

    def bfs(self, poi: int, pois: set, k: int, cap: int) -> tuple[set, bool]:
        visited = {poi}
        truncated = False
        queue = deque([(poi, 0)])
        while queue:
            v, depth = queue.popleft()
            vv = self.view(v)
            for u, op in self.enum(v):
                if u in visited:
                    continue
                if rule_allows(vv, self.view(u), op, self.table) is None:
                    continue
                if len(visited) >= cap:
                    truncated = True
                    queue.clear()
                    break
                visited.add(u)
                if u in pois:
                    queue.append((u, 0))
                elif u in self.forks(v):
                    queue.append((u, depth))  # fork hops are free
                elif depth < k - 1:
                    queue.append((u, depth + 1))
        return visited, truncated

    def edge_passes(self, sbj: int, obj: int, op: EdgeOp) -> bool:
        sv, ov = self.view(sbj), self.view(obj)
        return (
            rule_allows(sv, ov, op, self.table) is not None
            or rule_allows(ov, sv, op, self.table) is not None
        )


def sample(g, pois: Iterable[int], cfg: Optional[SamplingConfig] = None) -> list[ThreatGraph]:
    """Grow one merged, consolidated threat graph per connected seed group."""
    snap = g.snapshot() if isinstance(g, Ppg) else g
    cfg = cfg or SamplingConfig()
    poi_set = set(pois)
    if not poi_set:
        raise ValueError("no points of interest given")
    for p in poi_set:
        if not (0 <= p < snap.n_entities):
            raise ValueError(f"point of interest {p} is not a known entity")

    ex = _Expander(snap, cfg.table)
    parent = {p: p for p in poi_set}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    owner: dict[int, int] = {}
    visited: dict[int, set] = {}
    trunc: dict[int, bool] = {}
    for p in sorted(poi_set):
        visited[p], trunc[p] = ex.bfs(p, poi_set, cfg.k, cfg.max_nodes)
        for ent in visited[p]:
            if ent in owner:
                parent[find(p)] = find(owner[ent])
            else:
                owner[ent] = p

    nodes_by_root: dict[int, set] = {}
    seeds_by_root: dict[int, list] = {}
    trunc_by_root: dict[int, bool] = {}
    for p in sorted(poi_set):
        r = find(p)
        nodes_by_root.setdefault(r, set()).update(visited[p])
        seeds_by_root.setdefault(r, []).append(p)
        trunc_by_root[r] = trunc_by_root.get(r, False) or trunc[p]

    out = []
    for r in sorted(nodes_by_root, key=lambda r: min(nodes_by_root[r])):
        out.append(
            _build_threat_graph(
                snap, ex, nodes_by_root[r], seeds_by_root[r], trunc_by_root[r]
            )
        )
    return out


def _build_threat_graph(
    snap: Snapshot, ex: _Expander, ents: set, seeds: list, truncated: bool
) -> ThreatGraph:
    g = AttrGraph()
    rep: dict[tuple, int] = {}
    ppg_nodes: list[list[int]] = []
    attr_of: dict[int, int] = {}
    for ent in sorted(ents):
        abs_t = snap.ent_abs(ent)
        # consolidation identity: normalized name + abstract type
        key = (normalize_name(snap.ent_kind(ent), snap.ent_name(ent)), abs_t)
        idx = rep.get(key)
        if idx is None:
            idx = g.add_node(snap.ent_name(ent), abs_t)
            rep[key] = idx
            ppg_nodes.append([ent])
        else:
            ppg_nodes[idx].append(ent)
        attr_of[ent] = idx
    for fe in snap.iter_events():
        if fe.sbj_ent in attr_of and fe.obj_ent in attr_of:
            if ex.edge_passes(fe.sbj_ent, fe.obj_ent, fe.op):
                g.add_edge(attr_of[fe.sbj_ent], attr_of[fe.obj_ent], fe.op, fe.ts)
    g.dedup_edges()
    return ThreatGraph(g, ppg_nodes, sorted(seeds), truncated)


def coverage_noise(tg, qg) -> dict:
    """Coverage and noise of a sampled graph against a query graph.

    Coverage = matched fraction of the query graph; noise = fraction of the
    sampled graph not in the query graph. Nodes match on (normalized name,
    abstract type); edges on matched endpoints plus op.
    """
    sg = to_attr_graph(tg)
    q = to_attr_graph(qg)
    if q.n_nodes == 0:
        raise ValueError("query graph has no nodes")
    s_keys = [n.key() for n in sg.nodes]
    q_keys = [n.key() for n in q.nodes]
    sn, qn = set(s_keys), set(q_keys)
    se = {(s_keys[e.src], s_keys[e.dst], e.op) for e in sg.edges}
    qe = {(q_keys[e.src], q_keys[e.dst], e.op) for e in q.edges}
    return {
        "node_cr": len(sn & qn) / len(qn),
        "edge_cr": len(se & qe) / len(qe) if qe else 1.0,
        "node_nr": len(sn - qn) / len(sn) if sn else 0.0,
        "edge_nr": len(se - qe) / len(se) if se else 0.0,
    }


def save_threat_graphs(graphs: Sequence[ThreatGraph], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([tg.to_dict() for tg in graphs], fh, indent=2)
        fh.write("\n")


def load_threat_graphs(path: str) -> list[ThreatGraph]:
    with open(path, "r", encoding="utf-8") as fh:
        docs = json.load(fh)
    if not isinstance(docs, list):
        raise ValueError("threat graph file must hold a JSON array")
    return [ThreatGraph.from_dict(d) for d in docs]
