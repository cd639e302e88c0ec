"""Bit-packed, append-oriented provenance graph store.

Nodes live in two packed lists (subjects and objects); a process that acts and
is acted upon has one record in each, tied together by an entity table keyed
on the original opaque id. Every edge is stored twice: a full record in the
subject's queue and a back-reference in the object's queue. Queues start in
the sparse form (16-entry cap, narrow relative indices) and are promoted to
the extended form when they outgrow it; promotion is lossless and one-way.

Timestamps are split into a 5-bit day relative to the first event's day and a
27-bit millisecond-of-day, so a store covers at most 32 days.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, NamedTuple, Optional

from . import packing as pk
from .ingest import AuditEvent, Direction
from .vocab import (
    ABS_FROM_CODE,
    ABS_KIND,
    DEFAULT_RULES,
    OP_FROM_CODE,
    WIRE_CODE,
    AbstractionRules,
    AbsType,
    EdgeOp,
    EntityKind,
)

MAX_NODES = 1 << 32


class InsertOutcome(Enum):
    INSERTED = "inserted"
    SUPPRESSED_BY_VERSION = "suppressed_by_version"


class TraversalDir(Enum):
    IN = "in"
    OUT = "out"


class EdgeRecord(NamedTuple):
    other: int  # entity index of the far endpoint
    op: "EdgeOp"
    dir: Direction
    ts: int


class FullEdge(NamedTuple):
    sbj_ent: int
    obj_ent: int
    op: "EdgeOp"
    dir: Direction
    ts: int


@dataclass
class _Side:
    """One packed node list (subjects or objects)."""

    index: dict  # original id -> node index
    abs_code: list
    exp: list
    version: list
    date0: list
    queues: list  # list[list[int]] packed words
    ids: list  # original ids, side table
    names: list  # original names, side table
    ent: list  # node index -> entity index

    @classmethod
    def empty(cls) -> "_Side":
        return cls({}, [], [], [], [], [], [], [], [])


class Ppg:
    """The packed provenance graph. Single writer; readers use snapshots."""

    def __init__(self, rules: Optional[AbstractionRules] = None, versioning: bool = False):
        self.rules = rules or DEFAULT_RULES
        self.versioning = versioning
        self.origin_day: Optional[int] = None
        self.sbj = _Side.empty()
        self.obj = _Side.empty()
        # entity table: original id -> entity index; per-entity role indices
        self.ent_index: dict[str, int] = {}
        self.ent_ids: list[str] = []
        self.ent_sidx: list[int] = []  # -1 when the entity has no subject role
        self.ent_oidx: list[int] = []
        self._last_version: dict[tuple, int] = {}

    # -- construction ------------------------------------------------------

    def _entity(self, node_id: str) -> int:
        eidx = self.ent_index.get(node_id)
        if eidx is None:
            eidx = len(self.ent_ids)
            if eidx >= MAX_NODES:
                raise OverflowError("node index space exhausted")
            self.ent_index[node_id] = eidx
            self.ent_ids.append(node_id)
            self.ent_sidx.append(-1)
            self.ent_oidx.append(-1)
        return eidx

    def _intern(self, side: _Side, node_id: str, name: str, kind: EntityKind, addr, date: int) -> int:
        idx = side.index.get(node_id)
        if idx is not None:
            return idx
        idx = len(side.abs_code)
        if idx >= MAX_NODES:
            raise OverflowError("node index space exhausted")
        abs_type = self.rules.lookup(kind, name, addr)
        side.index[node_id] = idx
        side.abs_code.append(list(AbsType).index(abs_type))
        side.exp.append(0)
        side.version.append(0)
        side.date0.append(date)
        side.queues.append([])
        side.ids.append(node_id)
        side.names.append(name)
        eidx = self._entity(node_id)
        side.ent.append(eidx)
        if side is self.sbj:
            self.ent_sidx[eidx] = idx
        else:
            self.ent_oidx[eidx] = idx
        return idx

    def _promote_subject(self, sidx: int) -> None:
        if self.sbj.exp[sidx]:
            return
        old = self.sbj.queues[sidx]
        # swap in a fresh list so live snapshots keep the sparse words
        self.sbj.queues[sidx] = [
            pk.pack_ext_subject(*pk.unpack_sparse_subject(w)) for w in old
        ]
        self.sbj.exp[sidx] = 1

    def _promote_object(self, oidx: int) -> None:
        if self.obj.exp[oidx]:
            return
        old = self.obj.queues[oidx]
        self.obj.queues[oidx] = [
            pk.pack_ext_object(*pk.unpack_sparse_object(w)) for w in old
        ]
        self.obj.exp[oidx] = 1

    def add_event(self, e: AuditEvent) -> InsertOutcome:
        """Append one event; O(1) amortized.

        Nodes are created and abstracted on first sight. With versioning
        enabled, an event whose object version is unchanged since the last
        identical (sbj, op, obj, dir) event is suppressed; a subject-to-object
        flow increments the object's version (saturating at the field width).
        """
        if self.origin_day is None:
            self.origin_day = pk.day_start(e.ts)
        date, ms = pk.split_ts(e.ts, self.origin_day)
        sidx = self._intern(self.sbj, e.sbj_id, e.sbj_name, EntityKind.PROCESS, None, date)
        oidx = self._intern(self.obj, e.obj_id, e.obj_name, e.obj_kind, e.obj_addr, date)
        opcode = WIRE_CODE[e.op]
        dirbit = 0 if e.dir is Direction.OUT else 1

        key = None
        if self.versioning:
            key = (sidx, opcode, oidx, dirbit)
            last = self._last_version.get(key)
            if last is not None and last == self.obj.version[oidx]:
                return InsertOutcome.SUPPRESSED_BY_VERSION

        if dirbit == 0:  # flow into the object changes its semantics
            cap = pk.VERSION16_MAX if self.obj.exp[oidx] else pk.VERSION8_MAX
            if self.obj.version[oidx] < cap:
                self.obj.version[oidx] += 1
        version = self.obj.version[oidx]
        if key is not None:
            self._last_version[key] = version

        obj_delta = oidx - sidx
        squeue = self.sbj.queues[sidx]
        if not self.sbj.exp[sidx] and (
            len(squeue) >= pk.SPARSE_QUEUE_CAP
            or not pk.SPARSE_OBJ_DELTA_MIN <= obj_delta <= pk.SPARSE_OBJ_DELTA_MAX
        ):
            self._promote_subject(sidx)
            squeue = self.sbj.queues[sidx]
        if self.sbj.exp[sidx]:
            squeue.append(pk.pack_ext_subject(obj_delta, opcode, dirbit, ms, date, version))
        else:
            squeue.append(
                pk.pack_sparse_subject(obj_delta, opcode, dirbit, ms, date, min(version, pk.VERSION8_MAX))
            )

        sbj_delta = sidx - oidx
        oqueue = self.obj.queues[oidx]
        if not self.obj.exp[oidx] and (
            len(oqueue) >= pk.SPARSE_QUEUE_CAP
            or not pk.SPARSE_SBJ_DELTA_MIN <= sbj_delta <= pk.SPARSE_SBJ_DELTA_MAX
        ):
            self._promote_object(oidx)
            oqueue = self.obj.queues[oidx]
        if self.obj.exp[oidx]:
            oqueue.append(pk.pack_ext_object(sbj_delta, opcode, dirbit))
        else:
            oqueue.append(pk.pack_sparse_object(sbj_delta, opcode, dirbit))
        return InsertOutcome.INSERTED

    def add_events(self, events: Iterable[AuditEvent]) -> tuple[int, int]:
        inserted = suppressed = 0
        for e in events:
            if self.add_event(e) is InsertOutcome.INSERTED:
                inserted += 1
            else:
                suppressed += 1
        return inserted, suppressed

    # -- reading -----------------------------------------------------------

    def snapshot(self) -> "Snapshot":
        """Immutable point-in-time view; later add_event calls leave it intact."""
        return Snapshot(self, frozen=True)

    def view(self) -> "Snapshot":
        """Zero-copy live view for single-threaded read phases."""
        return Snapshot(self, frozen=False)

    # convenience pass-throughs used by reports and the CLI
    def memory_report(self) -> dict:
        return self.view().memory_report()

    def stats(self) -> dict:
        return self.view().stats()


class Snapshot:
    """Read-only access to a Ppg at a fixed point.

    A frozen snapshot copies the per-node metadata arrays, the queue reference
    list, and the queue lengths. Queues are append-only and promotion swaps in
    a new list rather than mutating the old one, so the captured references
    stay valid no matter what the writer does afterwards.
    """

    def __init__(self, g: Ppg, frozen: bool):
        self.origin_day = g.origin_day
        self.versioning = g.versioning
        self._ent_index = g.ent_index  # safe: entity indices only ever grow
        if frozen:
            self.ent_ids = list(g.ent_ids)
            self.ent_sidx = list(g.ent_sidx)
            self.ent_oidx = list(g.ent_oidx)
            self.s_abs, self.s_exp, self.s_ver = (
                list(g.sbj.abs_code), list(g.sbj.exp), list(g.sbj.version))
            self.s_date0 = list(g.sbj.date0)
            self.s_queues = list(g.sbj.queues)
            self.s_qlen = [len(q) for q in g.sbj.queues]
            self.s_names, self.s_ids, self.s_ent = (
                list(g.sbj.names), list(g.sbj.ids), list(g.sbj.ent))
            self.o_abs, self.o_exp, self.o_ver = (
                list(g.obj.abs_code), list(g.obj.exp), list(g.obj.version))
            self.o_date0 = list(g.obj.date0)
            self.o_queues = list(g.obj.queues)
            self.o_qlen = [len(q) for q in g.obj.queues]
            self.o_names, self.o_ids, self.o_ent = (
                list(g.obj.names), list(g.obj.ids), list(g.obj.ent))
        else:
            self.ent_ids, self.ent_sidx, self.ent_oidx = g.ent_ids, g.ent_sidx, g.ent_oidx
            self.s_abs, self.s_exp, self.s_ver = g.sbj.abs_code, g.sbj.exp, g.sbj.version
            self.s_date0 = g.sbj.date0
            self.s_queues = g.sbj.queues
            self.s_qlen = None
            self.s_names, self.s_ids, self.s_ent = g.sbj.names, g.sbj.ids, g.sbj.ent
            self.o_abs, self.o_exp, self.o_ver = g.obj.abs_code, g.obj.exp, g.obj.version
            self.o_date0 = g.obj.date0
            self.o_queues = g.obj.queues
            self.o_qlen = None
            self.o_names, self.o_ids, self.o_ent = g.obj.names, g.obj.ids, g.obj.ent

    # -- node-level accessors (entity index space) --------------------------

    @property
    def n_entities(self) -> int:
        return len(self.ent_ids)

    def _slen(self, sidx: int) -> int:
        return len(self.s_queues[sidx]) if self.s_qlen is None else self.s_qlen[sidx]

    def _olen(self, oidx: int) -> int:
        return len(self.o_queues[oidx]) if self.o_qlen is None else self.o_qlen[oidx]

    def ent_id(self, ent: int) -> str:
        return self.ent_ids[ent]

    def ent_name(self, ent: int) -> str:
        sidx = self.ent_sidx[ent]
        if sidx >= 0:
            return self.s_names[sidx]
        return self.o_names[self.ent_oidx[ent]]

    def ent_abs(self, ent: int) -> AbsType:
        sidx = self.ent_sidx[ent]
        code = self.s_abs[sidx] if sidx >= 0 else self.o_abs[self.ent_oidx[ent]]
        return ABS_FROM_CODE[code]

    def ent_kind(self, ent: int) -> EntityKind:
        return ABS_KIND[self.ent_abs(ent)]

    def ent_exp(self, ent: int) -> int:
        # a node counts as dependency-exploded if either of its roles is
        sidx, oidx = self.ent_sidx[ent], self.ent_oidx[ent]
        exp = 0
        if sidx >= 0:
            exp |= self.s_exp[sidx]
        if oidx >= 0:
            exp |= self.o_exp[oidx]
        return exp

    def entity_of_id(self, node_id: str) -> Optional[int]:
        idx = self._ent_index.get(node_id)
        return idx if idx is not None and idx < len(self.ent_ids) else None

    def process_entities(self) -> list[int]:
        return [e for e in range(self.n_entities) if self.ent_kind(e) is EntityKind.PROCESS]

    # -- edge-level accessors ------------------------------------------------

    def _subject_role_edges(self, ent: int) -> list[tuple[int, int, int, int]]:
        """Decoded (other_ent, opcode, dirbit, ts) in queue order for the
        subject role of an entity; empty if it never acted as a subject."""
        sidx = self.ent_sidx[ent]
        if sidx < 0:
            return []
        unpack = pk.unpack_ext_subject if self.s_exp[sidx] else pk.unpack_sparse_subject
        out = []
        q = self.s_queues[sidx]
        for i in range(self._slen(sidx)):
            delta, opcode, dirbit, ms, date, _ver = unpack(q[i])
            out.append(
                (self.o_ent[sidx + delta], opcode, dirbit, pk.join_ts(date, ms, self.origin_day))
            )
        return out

    def _object_role_edges(self, ent: int) -> list[tuple[int, int, int, int]]:
        """Decoded (other_ent, opcode, dirbit, ts) in queue order for the
        object role. Back-references carry no timestamp, so each group of
        identical (subject, op, dir) references is matched positionally
        against the subject queue's full records."""
        oidx = self.ent_oidx[ent]
        if oidx < 0:
            return []
        unpack = pk.unpack_ext_object if self.o_exp[oidx] else pk.unpack_sparse_object
        q = self.o_queues[oidx]
        refs = []
        groups: dict[tuple[int, int, int], list[int]] = {}
        for i in range(self._olen(oidx)):
            delta, opcode, dirbit = unpack(q[i])
            key = (oidx + delta, opcode, dirbit)
            groups.setdefault(key, []).append(i)
            refs.append(key)
        resolved: dict[tuple[int, int, int], list[int]] = {}
        for (sidx, opcode, dirbit), positions in groups.items():
            need = len(positions)
            s_unpack = pk.unpack_ext_subject if self.s_exp[sidx] else pk.unpack_sparse_subject
            sq = self.s_queues[sidx]
            found = []
            for j in range(self._slen(sidx)):
                d2, op2, db2, ms, date, _ver = s_unpack(sq[j])
                if op2 == opcode and db2 == dirbit and sidx + d2 == oidx:
                    found.append(pk.join_ts(date, ms, self.origin_day))
                    if len(found) == need:
                        break
            if len(found) != need:
                raise RuntimeError("object back-reference without a subject record")
            resolved[(sidx, opcode, dirbit)] = found
        cursor = {k: 0 for k in resolved}
        out = []
        for key in refs:
            sidx, opcode, dirbit = key
            ts = resolved[key][cursor[key]]
            cursor[key] += 1
            out.append((self.s_ent[sidx], opcode, dirbit, ts))
        return out

    def neighbors(
        self, ent: int, direction: TraversalDir, order: str = "auto"
    ) -> Iterator[EdgeRecord]:
        """Iterate decoded incident edges of one flow direction.

        Outgoing edges (flow leaves the node) default to ascending time,
        incoming to descending. Within equal timestamps, subject-role records
        precede object-role records and queue order breaks remaining ties.
        """
        outgoing = direction is TraversalDir.OUT
        if order == "auto":
            order = "asc" if outgoing else "desc"
        edges = []
        for other, opcode, dirbit, ts in self._subject_role_edges(ent):
            if (dirbit == 0) == outgoing:
                edges.append((other, opcode, dirbit, ts))
        for other, opcode, dirbit, ts in self._object_role_edges(ent):
            if (dirbit == 1) == outgoing:
                edges.append((other, opcode, dirbit, ts))
        edges.sort(key=lambda r: r[3], reverse=(order == "desc"))  # stable
        for other, opcode, dirbit, ts in edges:
            yield EdgeRecord(
                other,
                OP_FROM_CODE[opcode],
                Direction.OUT if dirbit == 0 else Direction.IN,
                ts,
            )

    def subject_events(self, ent: int) -> Iterator[FullEdge]:
        """Edges where the entity holds the subject role, in queue order."""
        for other, opcode, dirbit, ts in self._subject_role_edges(ent):
            yield FullEdge(
                ent,
                other,
                OP_FROM_CODE[opcode],
                Direction.OUT if dirbit == 0 else Direction.IN,
                ts,
            )

    def iter_events(self) -> Iterator[FullEdge]:
        """Every stored edge once, from the subject-side full records."""
        for ent in range(self.n_entities):
            yield from self.subject_events(ent)

    def pair_edges(self, a: int, b: int) -> list[tuple[int, int, int, int]]:
        """All decoded edges between two entities as (sbj_ent, opcode, dirbit, ts)."""
        out = []
        for src in (a, b):
            for other, opcode, dirbit, ts in self._subject_role_edges(src):
                if other == (b if src == a else a):
                    out.append((src, opcode, dirbit, ts))
        return out

    # -- accounting ----------------------------------------------------------

    def memory_report(self) -> dict:
        n_sbj, n_obj = len(self.s_abs), len(self.o_abs)
        sparse_s = ext_s = sparse_o = ext_o = 0
        for i in range(n_sbj):
            if self.s_exp[i]:
                ext_s += self._slen(i)
            else:
                sparse_s += self._slen(i)
        for i in range(n_obj):
            if self.o_exp[i]:
                ext_o += self._olen(i)
            else:
                sparse_o += self._olen(i)
        node_bytes = (n_sbj + n_obj) * (pk.NODE_HEADER_BYTES + pk.QUEUE_HANDLE_BYTES)
        edge_bytes = {
            "sparse_subject": sparse_s * pk.SPARSE_SUBJECT_BYTES,
            "ext_subject": ext_s * pk.EXT_SUBJECT_BYTES,
            "sparse_object": sparse_o * pk.SPARSE_OBJECT_BYTES,
            "ext_object": ext_o * pk.EXT_OBJECT_BYTES,
        }
        side_bytes = {
            "ids": sum(len(s.encode()) for s in self.s_ids)
            + sum(len(s.encode()) for s in self.o_ids),
            "names": sum(len(s.encode()) for s in self.s_names)
            + sum(len(s.encode()) for s in self.o_names),
        }
        return {
            "total_bytes": node_bytes + sum(edge_bytes.values()),
            "node_bytes": node_bytes,
            "bytes_per_edge_class": {
                "sparse_subject": pk.SPARSE_SUBJECT_BYTES,
                "ext_subject": pk.EXT_SUBJECT_BYTES,
                "sparse_object": pk.SPARSE_OBJECT_BYTES,
                "ext_object": pk.EXT_OBJECT_BYTES,
            },
            "edge_bytes": edge_bytes,
            "edge_counts": {
                "sparse_subject": sparse_s,
                "ext_subject": ext_s,
                "sparse_object": sparse_o,
                "ext_object": ext_o,
            },
            "n_subjects": n_sbj,
            "n_objects": n_obj,
            "n_entities": self.n_entities,
            "n_edges": sparse_s + ext_s,
            "exp_node_count": sum(self.s_exp) + sum(self.o_exp),
            "side_bytes": side_bytes,  # kept outside the packed region
        }

    def stats(self) -> dict:
        rep = self.memory_report()
        abs_hist: dict[str, int] = {}
        for ent in range(self.n_entities):
            name = self.ent_abs(ent).value
            abs_hist[name] = abs_hist.get(name, 0) + 1
        rep["abs_histogram"] = dict(sorted(abs_hist.items()))
        return rep


# -- binary checkpoint ------------------------------------------------------

_MAGIC = b"PPGF"
_FORMAT_VERSION = 1


def _write_str(fh, s: str) -> None:
    raw = s.encode()
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_str(fh) -> str:
    (n,) = struct.unpack("<I", fh.read(4))
    return fh.read(n).decode()


def _write_side(fh, side: _Side, subject: bool) -> None:
    fh.write(struct.pack("<I", len(side.abs_code)))
    for i in range(len(side.abs_code)):
        meta = pk.pack_node_meta(side.abs_code[i], side.exp[i], side.version[i], side.date0[i])
        fh.write(struct.pack("<II", i, meta))
        q = side.queues[i]
        fh.write(struct.pack("<I", len(q)))
        if side.exp[i]:
            width = 12 if subject else 8
        else:
            width = 8 if subject else 4
        for w in q:
            fh.write(w.to_bytes(width, "little"))
    for i in range(len(side.abs_code)):
        _write_str(fh, side.ids[i])
        _write_str(fh, side.names[i])


def _read_side(fh, subject: bool) -> _Side:
    side = _Side.empty()
    (count,) = struct.unpack("<I", fh.read(4))
    for i in range(count):
        idx, meta = struct.unpack("<II", fh.read(8))
        if idx != i:
            raise ValueError("corrupt checkpoint: node index mismatch")
        abs_code, exp, version, date0 = pk.unpack_node_meta(meta)
        (qlen,) = struct.unpack("<I", fh.read(4))
        if exp:
            width = 12 if subject else 8
        else:
            width = 8 if subject else 4
        queue = [int.from_bytes(fh.read(width), "little") for _ in range(qlen)]
        side.abs_code.append(abs_code)
        side.exp.append(exp)
        side.version.append(version)
        side.date0.append(date0)
        side.queues.append(queue)
    for _ in range(count):
        side.ids.append(_read_str(fh))
        side.names.append(_read_str(fh))
    for i, node_id in enumerate(side.ids):
        side.index[node_id] = i
    return side


def save_ppg(g: Ppg, path) -> None:
    """Write the store as a little-endian binary checkpoint."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HB", _FORMAT_VERSION, 1 if g.versioning else 0))
        fh.write(struct.pack("<q", -1 if g.origin_day is None else g.origin_day))
        _write_side(fh, g.sbj, subject=True)
        _write_side(fh, g.obj, subject=False)


def load_ppg(path, rules: Optional[AbstractionRules] = None) -> Ppg:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a packed-graph checkpoint")
        fmt, versioning = struct.unpack("<HB", fh.read(3))
        if fmt != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {fmt}")
        (origin,) = struct.unpack("<q", fh.read(8))
        g = Ppg(rules=rules, versioning=bool(versioning))
        g.origin_day = None if origin < 0 else origin
        g.sbj = _read_side(fh, subject=True)
        g.obj = _read_side(fh, subject=False)
    # rebuild the entity table from the id side tables
    for side, attr in ((g.sbj, "ent_sidx"), (g.obj, "ent_oidx")):
        for idx, node_id in enumerate(side.ids):
            eidx = g._entity(node_id)
            side.ent.append(eidx)
            getattr(g, attr)[eidx] = idx
    return g


def build_ppg(
    events: Iterable[AuditEvent],
    rules: Optional[AbstractionRules] = None,
    versioning: bool = False,
) -> tuple[Ppg, int]:
    """Construct a store from an event sequence; returns (graph, suppressed)."""
    g = Ppg(rules=rules, versioning=versioning)
    _, suppressed = g.add_events(events)
    return g, suppressed
