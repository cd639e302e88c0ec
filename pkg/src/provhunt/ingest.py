"""JSONL audit-stream parsing and the two stream deduplication passes applied
before graph construction."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Optional, TextIO, Union

from .vocab import OPS_BY_OBJECT_KIND, EdgeOp, EntityKind

DEFAULT_WINDOW_MS = 300_000


class Direction(str, Enum):
    """Information-flow direction of an event: subject-to-object or back."""

    OUT = "out"
    IN = "in"


@dataclass(slots=True, frozen=True)
class AuditEvent:
    ts: int
    sbj_id: str
    sbj_name: str
    obj_id: str
    obj_name: str
    obj_kind: EntityKind
    op: EdgeOp
    dir: Direction
    obj_addr: Optional[str] = None

    def to_dict(self) -> dict:
        doc = {
            "ts": self.ts,
            "sbj_id": self.sbj_id,
            "sbj_name": self.sbj_name,
            "obj_id": self.obj_id,
            "obj_name": self.obj_name,
            "obj_kind": self.obj_kind.value,
            "op": self.op.value,
            "dir": self.dir.value,
        }
        if self.obj_addr is not None:
            doc["obj_addr"] = self.obj_addr
        return doc


@dataclass(slots=True)
class ParseIssue:
    line_no: int
    reason: str


@dataclass
class DedupStats:
    input_events: int = 0
    s1_removed: int = 0
    s2_removed: int = 0
    remaining: int = 0

    def check(self) -> None:
        if self.input_events != self.s1_removed + self.s2_removed + self.remaining:
            raise AssertionError(f"dedup accounting broken: {self}")

    def to_dict(self) -> dict:
        return {
            "input_events": self.input_events,
            "s1_removed": self.s1_removed,
            "s2_removed": self.s2_removed,
            "remaining": self.remaining,
        }


_REQUIRED = ("ts", "sbj_id", "sbj_name", "obj_id", "obj_name", "obj_kind", "op", "dir")


def event_from_dict(doc: dict) -> AuditEvent:
    """Validate one decoded JSONL object; raises ValueError with the field at fault."""
    for key in _REQUIRED:
        if key not in doc:
            raise ValueError(f"missing field {key!r}")
    ts = doc["ts"]
    if not isinstance(ts, int) or isinstance(ts, bool) or ts < 0:
        raise ValueError("ts must be a nonnegative integer")
    try:
        kind = EntityKind(doc["obj_kind"])
    except ValueError:
        raise ValueError(f"unknown obj_kind {doc['obj_kind']!r}") from None
    try:
        op = EdgeOp(doc["op"])
    except ValueError:
        raise ValueError(f"unknown op {doc['op']!r}") from None
    if op not in OPS_BY_OBJECT_KIND[kind]:
        raise ValueError(f"op {op.value!r} not legal for object kind {kind.value!r}")
    try:
        direction = Direction(doc["dir"])
    except ValueError:
        raise ValueError(f"unknown dir {doc['dir']!r}") from None
    addr = doc.get("obj_addr")
    if (kind is EntityKind.NETFLOW) != (addr is not None):
        raise ValueError("obj_addr must be present exactly for netflow objects")
    for key in ("sbj_id", "sbj_name", "obj_id", "obj_name"):
        if not isinstance(doc[key], str) or not doc[key]:
            raise ValueError(f"{key} must be a non-empty string")
    return AuditEvent(
        ts=ts,
        sbj_id=doc["sbj_id"],
        sbj_name=doc["sbj_name"],
        obj_id=doc["obj_id"],
        obj_name=doc["obj_name"],
        obj_kind=kind,
        op=op,
        dir=direction,
        obj_addr=addr,
    )


def parse_stream(
    source: Union[TextIO, Iterable[str]],
    issues: Optional[list[ParseIssue]] = None,
) -> Iterator[AuditEvent]:
    """Yield events from UTF-8 JSONL in file order.

    Malformed lines are skipped, not fatal; each skip is recorded in `issues`
    (line number plus reason) when a list is supplied.
    """
    for line_no, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
            if not isinstance(doc, dict):
                raise ValueError("line is not a JSON object")
            yield event_from_dict(doc)
        except (ValueError, TypeError) as exc:
            if issues is not None:
                issues.append(ParseIssue(line_no, str(exc)))


def parse_file(path, issues: Optional[list[ParseIssue]] = None) -> list[AuditEvent]:
    with open(path, "r", encoding="utf-8") as fh:
        return list(parse_stream(fh, issues))


def write_events(events: Iterable[AuditEvent], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_dict()) + "\n")
            n += 1
    return n


def _template(e: AuditEvent) -> tuple:
    return (e.sbj_id, e.op, e.obj_id, e.dir)


def dedup_s1(events: Iterable[AuditEvent]) -> tuple[list[AuditEvent], int]:
    """Collapse consecutive duplicate events and period-2 template alternations.

    An event is kept iff its template (sbj_id, op, obj_id, dir) differs from
    the templates of the last two KEPT events. A run of identical templates
    keeps its first event; an alternating a/b run keeps the first a and the
    first b. Comparing against kept (rather than seen) templates makes the
    pass idempotent.
    """
    kept: list[AuditEvent] = []
    removed = 0
    last = second_last = None
    for ev in events:
        t = _template(ev)
        if t == last or t == second_last:
            removed += 1
            continue
        kept.append(ev)
        second_last, last = last, t
    return kept, removed


def dedup_s2(
    events: Iterable[AuditEvent], window_ms: int = DEFAULT_WINDOW_MS
) -> tuple[list[AuditEvent], int]:
    """Keep one send/recv per (subject, socket, op) key per tumbling window.

    Windows are aligned to the stream's first event timestamp. Events of any
    other operation pass through untouched.
    """
    if window_ms <= 0:
        raise ValueError("window_ms must be positive")
    kept: list[AuditEvent] = []
    removed = 0
    origin: Optional[int] = None
    seen: set[tuple] = set()
    for ev in events:
        if origin is None:
            origin = ev.ts
        if ev.op is EdgeOp.SEND or ev.op is EdgeOp.RECV:
            window = (ev.ts - origin) // window_ms
            key = (ev.sbj_id, ev.obj_id, ev.op, window)
            if key in seen:
                removed += 1
                continue
            seen.add(key)
        kept.append(ev)
    return kept, removed


def dedup(
    events: Iterable[AuditEvent], window_ms: int = DEFAULT_WINDOW_MS
) -> tuple[list[AuditEvent], DedupStats]:
    """Run S1 then S2 and return the surviving events with exact accounting."""
    events = list(events)
    after_s1, s1_removed = dedup_s1(events)
    after_s2, s2_removed = dedup_s2(after_s1, window_ms)
    stats = DedupStats(
        input_events=len(events),
        s1_removed=s1_removed,
        s2_removed=s2_removed,
        remaining=len(after_s2),
    )
    stats.check()
    return after_s2, stats
