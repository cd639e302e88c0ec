import sys
from pathlib import Path

from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "suite", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("suite")

from provhunt.ingest import AuditEvent, Direction
from provhunt.vocab import EdgeOp, EntityKind

# canonical flow direction per operation, used by test data builders
_OP_DIR = {
    EdgeOp.READ: Direction.IN,
    EdgeOp.RECV: Direction.IN,
    EdgeOp.LOAD: Direction.IN,
}


# name pools chosen so every abstract type shows up in generated scenes
_SCENE_PROCS = ["systemd", "sshd", "bash", "firefox", "gedit", "miner"]
_SCENE_DIRS = ["/usr/lib", "/etc", "/tmp", "/bin", "/home/u", "/srv"]
_SCENE_ADDRS = ["10.0.0.5:443", "192.168.1.9:22", "203.0.113.7:80", "198.51.100.2:53"]

_PP_OPS = [EdgeOp.FORK, EdgeOp.EXEC, EdgeOp.MODIFY, EdgeOp.OPEN]
_PF_OPS = [
    EdgeOp.CREATE, EdgeOp.READ, EdgeOp.WRITE, EdgeOp.RENAME, EdgeOp.LINK,
    EdgeOp.UNLINK, EdgeOp.MODIFY, EdgeOp.DELETE, EdgeOp.LOAD,
]
_PN_OPS = [EdgeOp.CONNECT, EdgeOp.START, EdgeOp.SEND, EdgeOp.RECV, EdgeOp.MESSAGE]


def random_event_scene(rng, max_events=250):
    """A synthetic audit stream with fork chains, timestamp ties, self-loops,
    and optional explosion hubs; node count stays well under 200."""
    procs = [f"p{i}" for i in range(rng.randint(3, 20))]
    pnames = {p: rng.choice(_SCENE_PROCS) for p in procs}
    files = [f"{rng.choice(_SCENE_DIRS)}/f{i}" for i in range(rng.randint(0, 15))]
    flows = [f"n{i}" for i in range(rng.randint(0, 5))]
    addrs = {n: rng.choice(_SCENE_ADDRS) for n in flows}

    def one(ts):
        s = rng.choice(procs)
        kind = rng.random()
        if kind < 0.35 or (not files and not flows):
            o = rng.choice(procs) if rng.random() > 0.1 else s  # sometimes a self-loop
            return mk_event(s, rng.choice(_PP_OPS), o, ts=ts,
                            sbj_name=pnames[s], obj_name=pnames[o],
                            dir=rng.choice(list(Direction)))
        if kind < 0.8 and files:
            return mk_event(s, rng.choice(_PF_OPS), rng.choice(files), ts=ts,
                            sbj_name=pnames[s], dir=rng.choice(list(Direction)))
        if flows:
            o = rng.choice(flows)
            return mk_event(s, rng.choice(_PN_OPS), o, ts=ts,
                            sbj_name=pnames[s], obj_addr=addrs[o],
                            dir=rng.choice(list(Direction)))
        return mk_event(s, rng.choice(_PF_OPS), "/tmp/fallback", ts=ts,
                        sbj_name=pnames[s], dir=rng.choice(list(Direction)))

    events = [one(rng.randrange(0, 4000)) for _ in range(rng.randint(10, max_events))]
    # fork chains make the hop exemption reachable
    for _ in range(rng.randint(0, 3)):
        chain = rng.sample(procs, min(len(procs), rng.randint(2, 4)))
        for a, b in zip(chain, chain[1:]):
            events.append(mk_event(a, EdgeOp.FORK, b, ts=rng.randrange(0, 4000),
                                   sbj_name=pnames[a], obj_name=pnames[b]))
    if rng.random() < 0.6 and files:  # subject explosion hub
        hub = rng.choice(procs)
        for i in range(18):
            events.append(mk_event(hub, EdgeOp.WRITE, rng.choice(files),
                                   ts=rng.randrange(0, 4000), sbj_name=pnames[hub]))
    if rng.random() < 0.4 and files:  # object explosion hub
        target = rng.choice(files)
        for i in range(18):
            s = rng.choice(procs)
            events.append(mk_event(s, EdgeOp.WRITE, target,
                                   ts=rng.randrange(0, 4000), sbj_name=pnames[s]))
    rng.shuffle(events)
    return events


def mk_event(sbj, op, obj, ts=0, obj_kind=None, dir=None, sbj_name=None, obj_name=None, obj_addr=None):
    """Compact AuditEvent builder for tests; ids double as names by default."""
    if isinstance(op, str):
        op = EdgeOp(op)
    if obj_kind is None:
        if op in (EdgeOp.FORK, EdgeOp.EXEC, EdgeOp.OPEN):
            obj_kind = EntityKind.PROCESS
        elif op in (EdgeOp.CONNECT, EdgeOp.START, EdgeOp.SEND, EdgeOp.RECV, EdgeOp.MESSAGE):
            obj_kind = EntityKind.NETFLOW
        else:
            obj_kind = EntityKind.FILE
    if obj_kind is EntityKind.NETFLOW and obj_addr is None:
        obj_addr = "203.0.113.9:443"
    return AuditEvent(
        ts=ts,
        sbj_id=sbj,
        sbj_name=sbj_name or sbj,
        obj_id=obj,
        obj_name=obj_name or obj,
        obj_kind=obj_kind,
        op=op,
        dir=dir or _OP_DIR.get(op, Direction.OUT),
        obj_addr=obj_addr,
    )
