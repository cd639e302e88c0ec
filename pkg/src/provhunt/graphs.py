"""Attributed graphs, their JSON form, and point-of-interest matching.

The attributed graph is the shared currency of the toolkit: sampled threat
graphs, hand-authored query graphs, and training corpora all use it.  Node
identity is positional (dense 0..n-1).  Edges are directed multi-edges; the
same (src, dst) pair may carry several ops, but exact (src, dst, op)
duplicates are collapsed by normalization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from typing import Iterable, Optional, Sequence

from .ingest import AuditEvent
from .vocab import ABS_KIND, AbsType, EdgeOp, EntityKind, normalize_name

WILDCARD = "*"


class SchemaError(ValueError):
    """A graph or pattern document violates its JSON schema.

    The message always starts with the path of the offending field,
    e.g. ``nodes[3].abs: unknown abstract type 'sysfile'``.
    """

    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


@dataclass(frozen=True)
class AttrNode:
    name: str
    abs: AbsType

    @property
    def kind(self) -> EntityKind:
        return ABS_KIND[self.abs]

    def key(self) -> tuple[str, AbsType]:
        """Merge identity: normalized name plus abstract type."""
        return normalize_name(self.kind, self.name), self.abs


@dataclass(frozen=True)
class AttrEdge:
    src: int
    dst: int
    op: EdgeOp
    ts: Optional[int] = None


@dataclass
class AttrGraph:
    nodes: list[AttrNode] = field(default_factory=list)
    edges: list[AttrEdge] = field(default_factory=list)
    label: Optional[str] = None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def add_node(self, name: str, abs_type: AbsType) -> int:
        self.nodes.append(AttrNode(name, AbsType(abs_type)))
        return len(self.nodes) - 1

    def add_edge(self, src: int, dst: int, op: EdgeOp, ts: Optional[int] = None) -> None:
        n = len(self.nodes)
        if not (0 <= src < n and 0 <= dst < n):
            raise ValueError(f"edge ({src}, {dst}) references a missing node (n={n})")
        self.edges.append(AttrEdge(src, dst, EdgeOp(op), ts))

    def dedup_edges(self) -> None:
        """Drop exact (src, dst, op) duplicates in place, keeping the first."""
        seen: set[tuple[int, int, EdgeOp]] = set()
        kept = []
        for e in self.edges:
            k = (e.src, e.dst, e.op)
            if k not in seen:
                seen.add(k)
                kept.append(e)
        self.edges = kept

    def edge_multiset(self) -> dict[tuple[int, int, str], int]:
        out: dict[tuple[int, int, str], int] = {}
        for e in self.edges:
            k = (e.src, e.dst, e.op.value)
            out[k] = out.get(k, 0) + 1
        return out

    def permuted(self, perm: Sequence[int]) -> "AttrGraph":
        """Relabel nodes so old index i becomes perm[i]; edges follow."""
        if sorted(perm) != list(range(len(self.nodes))):
            raise ValueError("perm must be a permutation of node indices")
        nodes: list[Optional[AttrNode]] = [None] * len(self.nodes)
        for i, node in enumerate(self.nodes):
            nodes[perm[i]] = node
        edges = [AttrEdge(perm[e.src], perm[e.dst], e.op, e.ts) for e in self.edges]
        assert all(n is not None for n in nodes)
        return AttrGraph(nodes=list(nodes), edges=edges, label=self.label)  # type: ignore[arg-type]

    def copy(self) -> "AttrGraph":
        return AttrGraph(nodes=list(self.nodes), edges=list(self.edges), label=self.label)


def graph_to_dict(g: AttrGraph) -> dict:
    doc: dict = {
        "nodes": [
            {"id": i, "name": n.name, "abs": n.abs.value} for i, n in enumerate(g.nodes)
        ],
        "edges": [
            {"src": e.src, "dst": e.dst, "op": e.op.value}
            if e.ts is None
            else {"src": e.src, "dst": e.dst, "op": e.op.value, "ts": e.ts}
            for e in g.edges
        ],
    }
    if g.label is not None:
        doc["label"] = g.label
    return doc


def _req(obj: dict, path: str, key: str, typ: type):
    if key not in obj:
        raise SchemaError(f"{path}.{key}", "missing required field")
    val = obj[key]
    # bool is an int subclass; never acceptable where an int is required
    if not isinstance(val, typ) or (typ is int and isinstance(val, bool)):
        raise SchemaError(f"{path}.{key}", f"expected {typ.__name__}, got {type(val).__name__}")
    return val


def graph_from_dict(doc: dict) -> AttrGraph:
    """Parse the graph JSON schema; unknown top-level keys are tolerated."""
    if not isinstance(doc, dict):
        raise SchemaError("$", f"expected object, got {type(doc).__name__}")
    raw_nodes = doc.get("nodes")
    if not isinstance(raw_nodes, list):
        raise SchemaError("nodes", "expected array")
    raw_edges = doc.get("edges")
    if not isinstance(raw_edges, list):
        raise SchemaError("edges", "expected array")

    slots: list[Optional[AttrNode]] = [None] * len(raw_nodes)
    for i, rn in enumerate(raw_nodes):
        path = f"nodes[{i}]"
        if not isinstance(rn, dict):
            raise SchemaError(path, "expected object")
        extra = set(rn) - {"id", "name", "abs"}
        if extra:
            raise SchemaError(f"{path}.{sorted(extra)[0]}", "unknown field")
        nid = _req(rn, path, "id", int)
        name = _req(rn, path, "name", str)
        abs_name = _req(rn, path, "abs", str)
        try:
            abs_type = AbsType(abs_name)
        except ValueError:
            raise SchemaError(f"{path}.abs", f"unknown abstract type {abs_name!r}") from None
        if not (0 <= nid < len(raw_nodes)):
            raise SchemaError(f"{path}.id", f"id {nid} outside dense range 0..{len(raw_nodes) - 1}")
        if slots[nid] is not None:
            raise SchemaError(f"{path}.id", f"duplicate id {nid}")
        slots[nid] = AttrNode(name, abs_type)

    g = AttrGraph(nodes=[n for n in slots if n is not None])
    for j, re_ in enumerate(raw_edges):
        path = f"edges[{j}]"
        if not isinstance(re_, dict):
            raise SchemaError(path, "expected object")
        extra = set(re_) - {"src", "dst", "op", "ts"}
        if extra:
            raise SchemaError(f"{path}.{sorted(extra)[0]}", "unknown field")
        src = _req(re_, path, "src", int)
        dst = _req(re_, path, "dst", int)
        op_name = _req(re_, path, "op", str)
        try:
            op = EdgeOp(op_name)
        except ValueError:
            raise SchemaError(f"{path}.op", f"unknown op {op_name!r}") from None
        ts = None
        if "ts" in re_:
            ts = _req(re_, path, "ts", int)
            if ts < 0:
                raise SchemaError(f"{path}.ts", "must be nonnegative")
        for end, val in (("src", src), ("dst", dst)):
            if not (0 <= val < g.n_nodes):
                raise SchemaError(f"{path}.{end}", f"node {val} does not exist")
        g.edges.append(AttrEdge(src, dst, op, ts))

    label = doc.get("label")
    if label is not None and not isinstance(label, str):
        raise SchemaError("label", f"expected str, got {type(label).__name__}")
    g.label = label
    return g


def save_graph(g: AttrGraph, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(graph_to_dict(g), fh, indent=2)
        fh.write("\n")


def load_graph(path: str) -> AttrGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return graph_from_dict(json.load(fh))


def to_attr_graph(obj) -> AttrGraph:
    """Project any graph-bearing value down to its plain AttrGraph."""
    if isinstance(obj, AttrGraph):
        return obj
    inner = getattr(obj, "graph", None)
    if isinstance(inner, AttrGraph):
        return inner
    raise TypeError(f"cannot project {type(obj).__name__} to an attributed graph")


# ---------------------------------------------------------------------------
# Point-of-interest patterns


@dataclass(frozen=True)
class PoiPattern:
    """Triple matcher <subject, op, object> with `*` wildcards.

    Name fields take shell-style globs matched against normalized entity
    names (process basename, collapsed path, or flow address).  The op field
    is an exact op name or `*`.  A fully wildcarded pattern is rejected.
    """

    sbj: str = WILDCARD
    op: str = WILDCARD
    obj: str = WILDCARD

    def __post_init__(self):
        if self.sbj == WILDCARD and self.op == WILDCARD and self.obj == WILDCARD:
            raise ValueError("pattern needs at least one non-wildcard field")
        if self.op != WILDCARD:
            EdgeOp(self.op)  # raises on unknown op names

    def matches(self, ev: AuditEvent) -> bool:
        if self.op != WILDCARD and ev.op != self.op:
            return False
        if self.sbj != WILDCARD:
            sname = normalize_name(EntityKind.PROCESS, ev.sbj_name)
            if not _glob(self.sbj, sname):
                return False
        if self.obj != WILDCARD:
            names = [normalize_name(ev.obj_kind, ev.obj_name)]
            if ev.obj_addr is not None:
                names.append(ev.obj_addr.strip().lower())
            if not any(_glob(self.obj, n) for n in names):
                return False
        return True


def _glob(pattern: str, name: str) -> bool:
    return fnmatchcase(name, pattern.strip().lower())


def patterns_from_dicts(docs: list) -> list[PoiPattern]:
    if not isinstance(docs, list):
        raise SchemaError("$", f"expected array, got {type(docs).__name__}")
    out = []
    for i, d in enumerate(docs):
        path = f"[{i}]"
        if not isinstance(d, dict):
            raise SchemaError(path, "expected object")
        extra = set(d) - {"sbj", "op", "obj"}
        if extra:
            raise SchemaError(f"{path}.{sorted(extra)[0]}", "unknown field")
        try:
            out.append(
                PoiPattern(
                    sbj=_req(d, path, "sbj", str) if "sbj" in d else WILDCARD,
                    op=_req(d, path, "op", str) if "op" in d else WILDCARD,
                    obj=_req(d, path, "obj", str) if "obj" in d else WILDCARD,
                )
            )
        except ValueError as e:
            if isinstance(e, SchemaError):
                raise
            raise SchemaError(path, str(e)) from None
    return out


def load_patterns(path: str) -> list[PoiPattern]:
    with open(path, "r", encoding="utf-8") as fh:
        return patterns_from_dicts(json.load(fh))


@dataclass
class PoiMatches:
    """Result of scanning an event stream against POI patterns.

    `ids` holds matched subject ids in first-seen order; `events` is the
    full matched-event log; `by_pattern` counts hits per pattern index.
    """

    ids: list[str] = field(default_factory=list)
    events: list[AuditEvent] = field(default_factory=list)
    by_pattern: dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ids": list(self.ids),
            "matched_events": [ev.to_dict() for ev in self.events],
            "by_pattern": {str(k): v for k, v in self.by_pattern.items()},
        }


def match_pois(events: Iterable[AuditEvent], patterns: Sequence[PoiPattern]) -> PoiMatches:
    """Flag the subject of every event matching any pattern.

    Deliberately recall-first: patterns are broad and the sampler is
    expected to tolerate false-positive seeds.
    """
    res = PoiMatches()
    seen: set[str] = set()
    for ev in events:
        hit = False
        for pi, pat in enumerate(patterns):
            if pat.matches(ev):
                res.by_pattern[pi] = res.by_pattern.get(pi, 0) + 1
                hit = True
        if hit:
            res.events.append(ev)
            if ev.sbj_id not in seen:
                seen.add(ev.sbj_id)
                res.ids.append(ev.sbj_id)
    return res


def poi_entities(snapshot, ids: Iterable[str]) -> set[int]:
    """Resolve matched subject ids to entity indices in a PPG snapshot."""
    out = set()
    for sid in ids:
        ent = snapshot.entity_of_id(sid)
        if ent is None:
            raise ValueError(f"id {sid!r} not present in the graph store")
        out.add(ent)
    return out
