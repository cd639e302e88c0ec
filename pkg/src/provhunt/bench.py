"""Synthetic benchmark range: a desktop-shaped audit stream with planted intrusions.

The generator emits a deterministic benign workload (daemons, shell sessions,
plus a browser and a web server that each accumulate enough distinct
neighbors to trip dependency explosion) and splices short attack campaigns
into it at configurable points. Ground truth comes out alongside the events:
per campaign the attack-exclusive entity ids, an alert pattern that finds its
foothold, and a query graph built from the injected events themselves.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from random import Random
from typing import Callable, Iterable, Optional, Sequence

from .graphs import AttrGraph, PoiPattern, match_pois, poi_entities
from .hunting import hunt, hunt_exhaustive
from .ingest import AuditEvent, Direction, dedup
from .ppg import Ppg, build_ppg
from .sampler import SamplingConfig, coverage_noise, sample
from .vocab import EdgeOp, EntityKind, abstract_node

PROFILES = ("desktop",)
CAMPAIGNS = ("upgrade-hijack", "shell-recon-exfil", "credential-theft")

# ops whose natural data flow runs object -> subject
_IN_OPS = {EdgeOp.READ, EdgeOp.RECV, EdgeOp.LOAD}

_T0 = 1_000_000  # range epoch, ms
_TICK_MS = 23


def _ev(ts, sbj, op, obj, kind=None, addr=None):
    """Event builder for the generator; entity ids double as names."""
    op = EdgeOp(op)
    if kind is None:
        if op in (EdgeOp.FORK, EdgeOp.EXEC, EdgeOp.OPEN):
            kind = EntityKind.PROCESS
        elif op in (EdgeOp.CONNECT, EdgeOp.START, EdgeOp.SEND,
                    EdgeOp.RECV, EdgeOp.MESSAGE):
            kind = EntityKind.NETFLOW
        else:
            kind = EntityKind.FILE
    if kind is EntityKind.NETFLOW and addr is None:
        addr = obj
    return AuditEvent(
        ts=ts,
        sbj_id=sbj,
        sbj_name=sbj,
        obj_id=obj,
        obj_name=obj,
        obj_kind=kind,
        op=op,
        dir=Direction.IN if op in _IN_OPS else Direction.OUT,
        obj_addr=addr,
    )


@dataclass(frozen=True)
class ScenarioSpec:
    """Knobs for one generated range.

    inject_at gives per-campaign injection points as fractions of the benign
    time span; None spreads the campaigns over the middle of the range, late
    enough that the explosion actors are warmed up before any attack lands.
    """

    profile: str = "desktop"
    n_events: int = 6_000
    campaigns: tuple[str, ...] = CAMPAIGNS
    inject_at: Optional[tuple[float, ...]] = None
    seed: int = 0

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")
        for c in self.campaigns:
            if c not in CAMPAIGNS:
                raise ValueError(f"unknown campaign {c!r}")
        if self.n_events < 2_000:
            raise ValueError("n_events below 2000 cannot sustain the benign profile")
        if self.inject_at is not None:
            if len(self.inject_at) != len(self.campaigns):
                raise ValueError("inject_at length must match campaigns")
            for f in self.inject_at:
                if not 0.1 <= f <= 0.95:
                    raise ValueError(f"injection fraction {f} outside [0.1, 0.95]")

    def to_dict(self) -> dict:
        return {
            "profile": self.profile,
            "n_events": self.n_events,
            "campaigns": list(self.campaigns),
            "inject_at": None if self.inject_at is None else list(self.inject_at),
            "seed": self.seed,
        }


@dataclass
class BenchRange:
    """One generated range: the merged event stream plus its ground truth."""

    spec: ScenarioSpec
    events: list[AuditEvent]
    queries: list[AttrGraph] = field(default_factory=list)
    patterns: list[PoiPattern] = field(default_factory=list)
    campaign_names: list[str] = field(default_factory=list)
    campaign_ids: dict[str, list[str]] = field(default_factory=dict)
    poi_ids: dict[str, list[str]] = field(default_factory=dict)
    attack_ids: set[str] = field(default_factory=set)
    injected_at: list[int] = field(default_factory=list)

    def labels(self) -> dict:
        """Ground-truth document, shaped for labels.json."""
        return {
            "spec": self.spec.to_dict(),
            "attack_ids": sorted(self.attack_ids),
            "campaigns": {
                name: {
                    "ids": self.campaign_ids[name],
                    "pois": self.poi_ids[name],
                    "pattern": {
                        "sbj": self.patterns[i].sbj,
                        "op": self.patterns[i].op,
                        "obj": self.patterns[i].obj,
                    },
                    "injected_at": self.injected_at[i],
                }
                for i, name in enumerate(self.campaign_names)
            },
        }


# ---------------------------------------------------------------------------
# benign profile

_DAEMONS = ["cron", "rsyslogd", "sshd", "nginx", "dbus-daemon"]

# behavior weights; ssh sessions dominate so the store grows many small
# session neighborhoods, which is also what keeps the packed layout lean
_BEHAVIOR_WEIGHTS = {
    "ssh_session": 30,
    "browse": 13,
    "cron_tick": 15,
    "web": 11,
    "edit": 9,
    "syslog": 8,
    "update": 6,
    "unit": 10,
    "bus": 8,
}


_CHILD_NAMES = ("grep", "cp", "tar", "sed", "awk")

_LOG_FACILITIES = (
    "syslog", "auth.log", "daemon.log", "kern.log", "mail.log", "user.log",
    "cron.log", "boot.log", "dpkg.log", "ufw.log", "lpr.log", "news.log",
)


class _Desktop:
    """Stateful benign actor pool; one call emits one behavior burst.

    Two structural rules keep the range huntable. First, short-lived
    subjects that sit next to an attack-ridden daemon (shells under sshd,
    jobs under cron) are born busy: a scratch-file lifecycle plus a fork
    fan-out push them past the sparse edge cap right away, so their
    sampled neighborhoods stay local instead of pulling the daemon, and
    through it every sibling, into one merged graph. Forked children act
    at least once so the subject and object tables advance in step and
    index deltas stay packable. Second,
    reads that many actors share go to paths that abstract as unknown
    files, which the sampling rules never admit; genuinely shared
    admissible names would weld unrelated neighborhoods together. Fanouts
    cycle with the instance counters so neighborhoods come out varied
    rather than as clones of one motif.
    """

    def __init__(self, rng: Random):
        self.rng = rng
        self.sessions = 0
        self.bursts = 0
        self.crons = 0
        self.web_hits = 0
        self.edits = 0
        self.units = 0
        self.syslogs = 0
        self.updates = 0
        self.buses = 0
        self.names = list(_BEHAVIOR_WEIGHTS)
        self.weights = [_BEHAVIOR_WEIGHTS[n] for n in self.names]

    def boot(self, t: int) -> list[AuditEvent]:
        return [_ev(t + i, "systemd", EdgeOp.FORK, d) for i, d in enumerate(_DAEMONS)]

    def tick(self, t: int) -> list[AuditEvent]:
        kind = self.rng.choices(self.names, weights=self.weights, k=1)[0]
        return getattr(self, kind)(t)

    def _scratch(self, out: list, t: int, sbj: str, stem: str,
                 ops: Sequence[EdgeOp], rounds: int = 10) -> None:
        # full lifecycle over a private three-file working set; repeated
        # write passes survive stream dedup (the cycle never repeats a
        # template back to back) but collapse under version suppression,
        # so they add store mass without changing the hunting topology
        files = [f"{stem}{x}" for x in "abc"]
        for f in files:
            out.append(_ev(t + len(out), sbj, EdgeOp.CREATE, f))
        for _ in range(rounds):
            for f in files:
                out.append(_ev(t + len(out), sbj, EdgeOp.WRITE, f))
        for op in ops:
            for f in files:
                out.append(_ev(t + len(out), sbj, op, f))

    def ssh_session(self, t: int) -> list[AuditEvent]:
        m = self.sessions
        self.sessions += 1
        shell = f"bash{m:04d}"
        doc = f"/home/u/docs/d{m:04d}.txt"
        out = [
            _ev(t, "sshd", EdgeOp.RECV, "10.0.0.5:22"),
            _ev(t + 1, "sshd", EdgeOp.FORK, shell),
            _ev(t + 2, shell, EdgeOp.READ, "/usr/share/bash/bashrc"),
        ]
        self._scratch(out, t, shell, f"/tmp/sh{m:04d}",
                      (EdgeOp.READ, EdgeOp.MODIFY, EdgeOp.UNLINK))
        for c in range(15 + m % 2):
            child = f"{_CHILD_NAMES[(m + c) % 5]}{m:04d}{chr(97 + c)}"
            out.append(_ev(t + len(out), shell, EdgeOp.FORK, child))
            out.append(_ev(t + len(out), child, EdgeOp.READ, doc))
            if c == 0:
                out.append(_ev(t + len(out), child, EdgeOp.WRITE,
                               f"/tmp/d{m:04d}.bak"))
        out.append(_ev(t + len(out), shell, EdgeOp.WRITE, "/home/u/.bash_history"))
        return out

    def browse(self, t: int) -> list[AuditEvent]:
        b = self.bursts
        self.bursts += 1
        flow = f"198.51.100.{b % 180 + 10}:443"
        out = [
            _ev(t, "firefox", EdgeOp.LOAD, "/usr/lib/libnss3.so"),
            _ev(t + 1, "firefox", EdgeOp.CONNECT, flow),
            _ev(t + 2, "firefox", EdgeOp.SEND, flow),
            _ev(t + 3, "firefox", EdgeOp.RECV, flow),
            _ev(t + 4, "firefox", EdgeOp.WRITE, f"/home/u/.cache/ff/{b:05d}.dat"),
        ]
        if b % 5 == 0:
            out.append(_ev(t + 5, "firefox", EdgeOp.READ, "/etc/hosts"))
        return out

    def cron_tick(self, t: int) -> list[AuditEvent]:
        j = self.crons
        self.crons += 1
        job = f"job{j:04d}"
        log = f"/var/tmp/job{j:04d}a"
        out = [
            _ev(t, "cron", EdgeOp.READ, "/etc/crontab"),
            _ev(t + 1, "cron", EdgeOp.FORK, job),
            _ev(t + 2, job, EdgeOp.READ, "/etc/app.conf"),
        ]
        # logs persist: no unlink pass here
        self._scratch(out, t, job, f"/var/tmp/job{j:04d}",
                      (EdgeOp.READ, EdgeOp.MODIFY))
        for i in range(10 + j % 2):
            wkr = f"wkr{j:04d}{chr(97 + i)}"
            out.append(_ev(t + len(out), job, EdgeOp.FORK, wkr))
            out.append(_ev(t + len(out), wkr, EdgeOp.READ, log))
        if j % 9 == 0:
            post = f"post{j:04d}"
            out += [
                _ev(t + len(out), job, EdgeOp.FORK, post),
                _ev(t + len(out) + 1, post, EdgeOp.READ, log),
                _ev(t + len(out) + 2, post, EdgeOp.WRITE, f"/var/tmp/post{j:04d}.sum"),
            ]
        return out

    def web(self, t: int) -> list[AuditEvent]:
        w = self.web_hits
        self.web_hits += 1
        flow = f"198.51.100.{w % 40 + 200}:80"
        out = [
            _ev(t, "nginx", EdgeOp.RECV, flow),
            _ev(t + 1, "nginx", EdgeOp.READ, "/srv/www/index.html"),
            _ev(t + 2, "nginx", EdgeOp.SEND, flow),
            _ev(t + 3, "nginx", EdgeOp.WRITE, "/srv/www/access.log"),
        ]
        if w % 5 == 0:
            cgi = f"cgi{w:04d}"
            out += [
                _ev(t + 4, "nginx", EdgeOp.FORK, cgi),
                _ev(t + 5, cgi, EdgeOp.READ, "/srv/www/app.cfg"),
                _ev(t + 6, cgi, EdgeOp.WRITE, f"/var/tmp/cgi{w:04d}.out"),
            ]
        return out

    def edit(self, t: int) -> list[AuditEvent]:
        e = self.edits
        self.edits += 1
        doc = f"/home/u/docs/g{e % 7}.txt"
        return [
            _ev(t, "gedit", EdgeOp.LOAD, "/usr/lib/libgtk3.so"),
            _ev(t + 1, "gedit", EdgeOp.READ, doc),
            _ev(t + 2, "gedit", EdgeOp.WRITE, doc),
        ]

    def unit(self, t: int) -> list[AuditEvent]:
        u = self.units
        self.units += 1
        name = f"unit{u:04d}"
        return [
            _ev(t, "systemd", EdgeOp.FORK, name),
            _ev(t + 1, name, EdgeOp.WRITE, f"/var/tmp/unit{u:04d}.state"),
        ]

    def bus(self, t: int) -> list[AuditEvent]:
        # local IPC over loopback; two fresh ports per burst walk the broker
        # past the sparse cap the same way the log rotation does
        s = self.buses
        self.buses += 1
        return [
            _ev(t, "dbus-daemon", EdgeOp.MESSAGE, f"127.0.0.1:{3000 + 2 * s}"),
            _ev(t + 1, "dbus-daemon", EdgeOp.MESSAGE, f"127.0.0.1:{3001 + 2 * s}"),
        ]

    def syslog(self, t: int) -> list[AuditEvent]:
        # facility fan-out plus repeats; stream hygiene eats the repeats and
        # the rotated names walk the daemon past the sparse cap over time
        s = self.syslogs
        self.syslogs += 1
        fac = _LOG_FACILITIES[s % len(_LOG_FACILITIES)]
        rot = _LOG_FACILITIES[(s + 7) % len(_LOG_FACILITIES)]
        return [
            _ev(t, "rsyslogd", EdgeOp.READ, "/etc/rsyslog.conf"),
            _ev(t + 1, "rsyslogd", EdgeOp.WRITE, f"/var/log/{fac}"),
            _ev(t + 2, "rsyslogd", EdgeOp.WRITE, f"/var/log/{fac}"),
            _ev(t + 3, "rsyslogd", EdgeOp.WRITE, f"/var/log/{rot}.1"),
        ]

    def update(self, t: int) -> list[AuditEvent]:
        u = self.updates
        self.updates += 1
        return [
            _ev(t, "pkgd", EdgeOp.READ, "/etc/pkg.conf"),
            _ev(t + 1, "pkgd", EdgeOp.WRITE, "/var/tmp/pkg.state"),
            _ev(t + 2, "pkgd", EdgeOp.WRITE, f"/var/tmp/pkg-{u:04d}.journal"),
        ]


def _benign(n: int, rng: Random) -> list[AuditEvent]:
    pool = _Desktop(rng)
    out = pool.boot(_T0)
    t = _T0 + _TICK_MS
    while len(out) < n:
        out.extend(pool.tick(t))
        t += _TICK_MS
    return out[:n]


# ---------------------------------------------------------------------------
# attack campaigns
#
# Each builder returns the injected events; every entity id is chosen so it
# never collides with the benign pool except where the chain deliberately
# rides a benign actor (firefox, sshd, cron).

def _upgrade_hijack(t: int) -> list[AuditEvent]:
    flow = "203.0.113.50:443"
    return [
        _ev(t, "firefox", EdgeOp.RECV, flow),
        _ev(t + 1, "firefox", EdgeOp.WRITE, "/tmp/upd-pkg.bin"),
        _ev(t + 2, "firefox", EdgeOp.FORK, "upd-agent"),
        _ev(t + 3, "upd-agent", EdgeOp.LOAD, "/tmp/upd-pkg.bin"),
        _ev(t + 4, "upd-agent", EdgeOp.WRITE, "/usr/lib/libupdhook.so"),
        _ev(t + 5, "upd-agent", EdgeOp.MODIFY, "/etc/ld.so.preload"),
        _ev(t + 6, "upd-agent", EdgeOp.FORK, "updhelper"),
        _ev(t + 7, "updhelper", EdgeOp.SEND, flow),
    ]


def _shell_recon_exfil(t: int) -> list[AuditEvent]:
    return [
        _ev(t, "sshd", EdgeOp.RECV, "10.66.0.2:60022"),
        _ev(t + 1, "sshd", EdgeOp.FORK, "bash-ev"),
        _ev(t + 2, "bash-ev", EdgeOp.READ, "/etc/passwd"),
        _ev(t + 3, "bash-ev", EdgeOp.READ, "/home/u/docs/payroll.db"),
        _ev(t + 4, "bash-ev", EdgeOp.FORK, "tar-ev"),
        _ev(t + 5, "tar-ev", EdgeOp.WRITE, "/tmp/exfil.tgz"),
        _ev(t + 6, "bash-ev", EdgeOp.SEND, "203.0.113.77:8443"),
    ]


def _credential_theft(t: int) -> list[AuditEvent]:
    flow = "10.8.8.8:4444"
    return [
        _ev(t, "cron", EdgeOp.FORK, "sh-x"),
        _ev(t + 1, "sh-x", EdgeOp.EXEC, "scraper"),
        _ev(t + 2, "scraper", EdgeOp.READ, "/etc/shadow"),
        _ev(t + 3, "scraper", EdgeOp.WRITE, "/var/tmp/.syscache"),
        _ev(t + 4, "scraper", EdgeOp.CONNECT, flow),
        _ev(t + 5, "scraper", EdgeOp.SEND, flow),
    ]


_CAMPAIGN_BUILDERS: dict[str, Callable[[int], list[AuditEvent]]] = {
    "upgrade-hijack": _upgrade_hijack,
    "shell-recon-exfil": _shell_recon_exfil,
    "credential-theft": _credential_theft,
}

# alert patterns keyed to behavior the benign profile never exhibits
_CAMPAIGN_PATTERNS: dict[str, PoiPattern] = {
    "upgrade-hijack": PoiPattern(op="write", obj="/usr/lib/*"),
    "shell-recon-exfil": PoiPattern(op="send", obj="203.0.113.77:*"),
    "credential-theft": PoiPattern(op="read", obj="/etc/shadow"),
}


def _graph_from_events(events: Sequence[AuditEvent]) -> AttrGraph:
    """Abstract an event script into an attribute graph, one node per id."""
    g = AttrGraph()
    idx: dict[str, int] = {}
    for ev in events:
        if ev.sbj_id not in idx:
            idx[ev.sbj_id] = g.add_node(
                ev.sbj_name, abstract_node(EntityKind.PROCESS, ev.sbj_name))
        if ev.obj_id not in idx:
            idx[ev.obj_id] = g.add_node(
                ev.obj_name, abstract_node(ev.obj_kind, ev.obj_name, ev.obj_addr))
        g.add_edge(idx[ev.sbj_id], idx[ev.obj_id], ev.op, ev.ts)
    g.dedup_edges()
    return g


def generate(spec: ScenarioSpec) -> BenchRange:
    """Build the full range: benign stream, injected campaigns, ground truth."""
    rng = Random(spec.seed)
    benign = _benign(spec.n_events, rng)
    benign_ids = {e.sbj_id for e in benign} | {e.obj_id for e in benign}
    span = benign[-1].ts - _T0 if benign else 0

    fractions = spec.inject_at
    if fractions is None:
        n = len(spec.campaigns)
        fractions = tuple(0.30 + 0.2 * i / max(n - 1, 1) for i in range(n))

    br = BenchRange(spec=spec, events=[])
    attack_events: list[AuditEvent] = []
    for name, frac in zip(spec.campaigns, fractions):
        t = _T0 + int(span * frac)
        evs = _CAMPAIGN_BUILDERS[name](t)
        ids = {e.sbj_id for e in evs} | {e.obj_id for e in evs}
        br.campaign_names.append(name)
        br.campaign_ids[name] = sorted(ids - benign_ids)
        br.attack_ids.update(ids - benign_ids)
        br.queries.append(_graph_from_events(evs))
        br.patterns.append(_CAMPAIGN_PATTERNS[name])
        br.injected_at.append(t)
        attack_events.extend(evs)

    br.events = sorted(benign + attack_events, key=lambda e: e.ts)
    for name, pat in zip(br.campaign_names, br.patterns):
        hits = match_pois(br.events, [pat])
        br.poi_ids[name] = list(hits.ids)
    return br


# ---------------------------------------------------------------------------
# memory baseline

_NODE_FIXED = 1 + 16  # kind byte plus two list heads
_ADJ_ENTRY = 18       # peer ref, op/dir tag, timestamp
_UTF8 = "utf-8"


class NaiveStore:
    """Plain adjacency-list provenance store, the uncompressed baseline.

    Every node keeps its full id and name as strings; every event lands as
    one entry in the subject's out-list and one in the object's in-list.
    """

    def __init__(self):
        self.nodes: dict[str, tuple[EntityKind, str]] = {}
        self.adj_out: dict[str, list[tuple]] = {}
        self.adj_in: dict[str, list[tuple]] = {}

    def _touch(self, node_id: str, kind: EntityKind, name: str) -> None:
        if node_id not in self.nodes:
            self.nodes[node_id] = (kind, name)
            self.adj_out[node_id] = []
            self.adj_in[node_id] = []

    def add(self, ev: AuditEvent) -> None:
        self._touch(ev.sbj_id, EntityKind.PROCESS, ev.sbj_name)
        self._touch(ev.obj_id, ev.obj_kind, ev.obj_name)
        rec = (ev.op, ev.dir, ev.ts)
        self.adj_out[ev.sbj_id].append((ev.obj_id,) + rec)
        self.adj_in[ev.obj_id].append((ev.sbj_id,) + rec)

    def add_events(self, events: Iterable[AuditEvent]) -> int:
        n = 0
        for ev in events:
            self.add(ev)
            n += 1
        return n

    @property
    def n_edges(self) -> int:
        return sum(len(v) for v in self.adj_out.values())

    def edge_multiset(self) -> dict[tuple, int]:
        out: dict[tuple, int] = {}
        for sbj, entries in self.adj_out.items():
            for obj, op, d, ts in entries:
                k = (sbj, obj, op, d, ts)
                out[k] = out.get(k, 0) + 1
        return out

    def memory_bytes(self) -> int:
        total = 0
        for node_id, (kind, name) in self.nodes.items():
            total += len(node_id.encode(_UTF8)) + len(name.encode(_UTF8)) + _NODE_FIXED
        total += self.n_edges * 2 * _ADJ_ENTRY
        return total


def bench_memory(events: Sequence[AuditEvent]) -> dict:
    """Build both stores from the same post-dedup stream and compare footprints.

    The packed store runs without version suppression here so both sides hold
    the identical edge multiset and the comparison is purely about layout;
    the suppression saving is reported separately.
    """
    kept, stats = dedup(events)
    g, _ = build_ppg(kept, versioning=False)
    snap = g.snapshot()
    naive = NaiveStore()
    naive.add_events(kept)

    gv, suppressed = build_ppg(kept, versioning=True)
    rep = snap.memory_report()
    rep_v = gv.snapshot().memory_report()

    ppg_bytes = rep["total_bytes"]
    naive_bytes = naive.memory_bytes()
    reduction = 0.0 if naive_bytes == 0 else 1.0 - ppg_bytes / naive_bytes
    return {
        "events": len(events),
        "after_dedup": len(kept),
        "ppg_edges": rep["n_edges"],
        "naive_edges": naive.n_edges,
        "ppg_bytes": ppg_bytes,
        "naive_bytes": naive_bytes,
        "reduction": reduction,
        "reduction_pct": 100.0 * reduction,
        "versioned_edges": rep_v["n_edges"],
        "versioned_bytes": rep_v["total_bytes"],
        "suppressed": suppressed,
    }


# ---------------------------------------------------------------------------
# sampling and hunting benches

def bench_sampling(events: Sequence[AuditEvent], labels: dict,
                   queries: Sequence[AttrGraph], ks: Sequence[int] = (1, 2, 3),
                   rules: str = "default", max_nodes: int = 5000) -> dict:
    """Coverage/noise table per campaign per hop budget.

    labels is the ground-truth document from BenchRange.labels(); each
    campaign is sampled from its own alert-derived seeds and scored against
    its query graph. Campaigns whose seeds are missing from the store are
    reported as errors rather than dropped silently.
    """
    kept, _ = dedup(events)
    g, _ = build_ppg(kept, versioning=True)
    snap = g.snapshot()
    names = list(labels["campaigns"])
    table: dict[str, dict] = {}
    for name, qg in zip(names, queries):
        row: dict = {}
        pois = poi_entities(snap, labels["campaigns"][name]["pois"])
        for k in ks:
            cfg = SamplingConfig(k=k, rules=rules, max_nodes=max_nodes)
            tgs = sample(snap, pois, cfg)
            best = None
            for tg in tgs:
                cn = coverage_noise(tg, qg)
                cn["nodes"] = tg.graph.n_nodes
                cn["edges"] = tg.graph.n_edges
                if best is None or cn["node_cr"] > best["node_cr"]:
                    best = cn
            row[k] = best
        table[name] = row
    return table


def make_labeler(snap, attack_ids: Iterable[str]) -> Callable:
    """True iff a sampled graph touches any attack-exclusive entity."""
    wanted = {snap.entity_of_id(i) for i in attack_ids}
    wanted.discard(None)

    def labeler(tg) -> bool:
        return any(e in wanted for ents in tg.ppg_nodes for e in ents)

    return labeler


def bench_hunt(events: Sequence[AuditEvent], labels: dict,
               queries: Sequence[AttrGraph], model, theta: float = 0.3,
               k: int = 2, stride: int = 1, decoy_pois: int = 0) -> dict:
    """Full pipeline on one range: dedup, build, seed, sample, score, judge.

    Seeds come from the ground-truth alert ids; a range without any (benign
    stream) falls back to sweeping every process so score distributions are
    still produced. decoy_pois > 0 mixes in that many benign process seeds,
    evenly spread over the store, so false-positive rates mean something.
    Decoys are drawn from unexploded processes; an alert planted on an
    exploded hub samples to an empty neighborhood with nothing to score.
    Returns the hunt report dict plus flat score/label arrays for external
    plotting.
    """
    kept, _ = dedup(events)
    g, _ = build_ppg(kept, versioning=True)
    snap = g.snapshot()
    attack_ids = set(labels.get("attack_ids", ()))
    labeler = make_labeler(snap, attack_ids)

    poi_ids: list[str] = []
    for doc in labels.get("campaigns", {}).values():
        poi_ids.extend(doc.get("pois", ()))
    pois = sorted(poi_entities(snap, set(poi_ids)))

    if decoy_pois > 0:
        benign = [e for e in snap.process_entities()
                  if not snap.ent_exp(e)
                  and snap.ent_id(e) not in attack_ids and e not in pois]
        step = max(len(benign) // decoy_pois, 1)
        pois = sorted(set(pois) | set(benign[::step][:decoy_pois]))

    if pois:
        report = hunt(snap, pois, queries, model, theta=theta, k=k,
                      labeler=labeler)
    else:
        report = hunt_exhaustive(snap, queries, model, theta=theta, k=k,
                                 stride=stride, labeler=labeler)
    out = report.to_dict()
    out["hist"] = {
        "scores": [v.score for v in report.verdicts],
        "labels": [v.label for v in report.verdicts],
    }
    return out


# ---------------------------------------------------------------------------
# suites

def run_suite(name: str, seed: int = 0, n_events: Optional[int] = None,
              model=None, theta: float = 0.3, k: int = 2,
              decoy_pois: int = 60) -> dict:
    """Canned bench runs for the command line; returns one JSON-ready dict.

    The hunt stage needs a trained matcher, so it only runs when one is
    passed in; the canned suites stay model-free.
    """
    if name == "smoke":
        spec = ScenarioSpec(n_events=n_events or 3_000, seed=seed)
    elif name in ("memory", "sampling", "all"):
        spec = ScenarioSpec(n_events=n_events or 6_000, seed=seed)
    else:
        raise ValueError(f"unknown suite {name!r}")

    t_start = time.monotonic()
    br = generate(spec)
    labels = br.labels()
    out: dict = {"suite": name, "spec": spec.to_dict()}
    if name in ("smoke", "memory", "all"):
        out["memory"] = bench_memory(br.events)
    if name in ("smoke", "sampling", "all"):
        ks = (2,) if name == "smoke" else (1, 2, 3)
        out["sampling"] = bench_sampling(br.events, labels, br.queries, ks=ks)
    if model is not None and name in ("smoke", "all"):
        out["hunt"] = bench_hunt(br.events, labels, br.queries, model,
                                 theta=theta, k=k, decoy_pois=decoy_pois)
    out["elapsed_s"] = time.monotonic() - t_start
    return out
