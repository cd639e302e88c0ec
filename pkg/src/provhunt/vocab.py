"""Shared domain vocabulary: entity kinds, edge operations, abstract node types,
and the name-to-abstract-type mapping used by every other module."""

from __future__ import annotations

import ipaddress
import json
from dataclasses import dataclass, field
from enum import Enum
from fnmatch import fnmatchcase
from typing import Optional


class EntityKind(str, Enum):
    PROCESS = "process"
    FILE = "file"
    NETFLOW = "netflow"


class EdgeOp(str, Enum):
    FORK = "fork"
    EXEC = "exec"
    MODIFY = "modify"
    OPEN = "open"
    CREATE = "create"
    READ = "read"
    WRITE = "write"
    RENAME = "rename"
    LINK = "link"
    UNLINK = "unlink"
    DELETE = "delete"
    LOAD = "load"
    CONNECT = "connect"
    START = "start"
    SEND = "send"
    RECV = "recv"
    MESSAGE = "message"


# 4-bit wire codes. 17 op names must fit 16 codes: `start` shares a code with
# `connect` (both denote connection initiation) and decodes canonically to
# `connect`.
WIRE_CODE: dict[EdgeOp, int] = {
    EdgeOp.FORK: 0,
    EdgeOp.EXEC: 1,
    EdgeOp.MODIFY: 2,
    EdgeOp.OPEN: 3,
    EdgeOp.CREATE: 4,
    EdgeOp.READ: 5,
    EdgeOp.WRITE: 6,
    EdgeOp.RENAME: 7,
    EdgeOp.LINK: 8,
    EdgeOp.UNLINK: 9,
    EdgeOp.DELETE: 10,
    EdgeOp.LOAD: 11,
    EdgeOp.CONNECT: 12,
    EdgeOp.START: 12,
    EdgeOp.SEND: 13,
    EdgeOp.RECV: 14,
    EdgeOp.MESSAGE: 15,
}

OP_FROM_CODE: dict[int, EdgeOp] = {}
for _op, _code in WIRE_CODE.items():
    OP_FROM_CODE.setdefault(_code, _op)  # first writer wins; connect precedes start

N_OP_CODES = 16

# Legal operations per object kind. The subject is always a process.
OPS_BY_OBJECT_KIND: dict[EntityKind, frozenset[EdgeOp]] = {
    EntityKind.PROCESS: frozenset({EdgeOp.FORK, EdgeOp.EXEC, EdgeOp.MODIFY, EdgeOp.OPEN}),
    EntityKind.FILE: frozenset(
        {
            EdgeOp.CREATE,
            EdgeOp.READ,
            EdgeOp.WRITE,
            EdgeOp.RENAME,
            EdgeOp.LINK,
            EdgeOp.UNLINK,
            EdgeOp.MODIFY,
            EdgeOp.DELETE,
            EdgeOp.LOAD,
        }
    ),
    EntityKind.NETFLOW: frozenset(
        {EdgeOp.CONNECT, EdgeOp.START, EdgeOp.SEND, EdgeOp.RECV, EdgeOp.MESSAGE}
    ),
}


class AbsType(str, Enum):
    SYS_PROCESS = "sys_process"
    USR_PROCESS = "usr_process"
    SERV_PROCESS = "serv_process"
    UTIL_PROCESS = "util_process"
    WEB_PROCESS = "web_process"
    UNKNOWN_PROCESS = "unknown_process"
    LIB_FILE = "lib_file"
    SYS_FILE = "sys_file"
    CFG_FILE = "cfg_file"
    USR_FILE = "usr_file"
    TMP_FILE = "tmp_file"
    UNKNOWN_FILE = "unknown_file"
    PRIVATE_NETFLOW = "private_netflow"
    PUBLIC_NETFLOW = "public_netflow"


ABS_CODE: dict[AbsType, int] = {a: i for i, a in enumerate(AbsType)}
ABS_FROM_CODE: dict[int, AbsType] = {i: a for a, i in ABS_CODE.items()}
N_ABS_TYPES = len(AbsType)

ABS_KIND: dict[AbsType, EntityKind] = {
    AbsType.SYS_PROCESS: EntityKind.PROCESS,
    AbsType.USR_PROCESS: EntityKind.PROCESS,
    AbsType.SERV_PROCESS: EntityKind.PROCESS,
    AbsType.UTIL_PROCESS: EntityKind.PROCESS,
    AbsType.WEB_PROCESS: EntityKind.PROCESS,
    AbsType.UNKNOWN_PROCESS: EntityKind.PROCESS,
    AbsType.LIB_FILE: EntityKind.FILE,
    AbsType.SYS_FILE: EntityKind.FILE,
    AbsType.CFG_FILE: EntityKind.FILE,
    AbsType.USR_FILE: EntityKind.FILE,
    AbsType.TMP_FILE: EntityKind.FILE,
    AbsType.UNKNOWN_FILE: EntityKind.FILE,
    AbsType.PRIVATE_NETFLOW: EntityKind.NETFLOW,
    AbsType.PUBLIC_NETFLOW: EntityKind.NETFLOW,
}


def abs_sets() -> tuple[frozenset[AbsType], frozenset[AbsType], frozenset[AbsType]]:
    """Return the (P, F, N) partition of abstract types by parent kind."""
    p = frozenset(a for a, k in ABS_KIND.items() if k is EntityKind.PROCESS)
    f = frozenset(a for a, k in ABS_KIND.items() if k is EntityKind.FILE)
    n = frozenset(a for a, k in ABS_KIND.items() if k is EntityKind.NETFLOW)
    return p, f, n


def normalize_process_name(name: str) -> str:
    """Lowercase basename of a process image name or path."""
    name = name.strip().lower().replace("\\", "/")
    return name.rsplit("/", 1)[-1]


def normalize_path(path: str) -> str:
    """Lowercased, forward-slash, collapsed form of a file path."""
    p = path.strip().lower().replace("\\", "/")
    while "//" in p:
        p = p.replace("//", "/")
    if len(p) > 1 and p.endswith("/"):
        p = p[:-1]
    return p


def normalize_name(kind: EntityKind, name: str) -> str:
    if kind is EntityKind.PROCESS:
        return normalize_process_name(name)
    if kind is EntityKind.FILE:
        return normalize_path(name)
    return name.strip().lower()


@dataclass(frozen=True)
class AbstractionRule:
    """One first-match-wins mapping entry.

    For processes the patterns are case-insensitive globs over the lowercase
    basename; for files they are path prefixes (trailing text after the prefix
    is free) or globs over the normalized path; for netflows they are CIDR
    ranges tested against the address part of `host:port` strings.
    """

    kind: EntityKind
    abs: AbsType
    prefixes: tuple[str, ...] = ()
    globs: tuple[str, ...] = ()
    cidrs: tuple[str, ...] = ()

    def matches(self, norm_name: str, addr: Optional[str]) -> bool:
        if self.kind is EntityKind.NETFLOW:
            ip = _addr_ip(addr)
            if ip is None:
                return False
            return any(ip in ipaddress.ip_network(c) for c in self.cidrs)
        for pre in self.prefixes:
            if norm_name.startswith(pre):
                return True
        return any(fnmatchcase(norm_name, g) for g in self.globs)


def _addr_ip(addr: Optional[str]):
    if not addr:
        return None
    host = addr.strip()
    if host.startswith("["):  # [v6]:port
        host = host[1:].split("]", 1)[0]
    elif host.count(":") == 1:  # v4:port
        host = host.split(":", 1)[0]
    try:
        return ipaddress.ip_address(host)
    except ValueError:
        return None


@dataclass
class AbstractionRules:
    """Ordered rule list with per-kind catch-alls, making abstraction total."""

    rules: list[AbstractionRule] = field(default_factory=list)
    version: int = 1

    CATCH_ALL = {
        EntityKind.PROCESS: AbsType.UNKNOWN_PROCESS,
        EntityKind.FILE: AbsType.UNKNOWN_FILE,
        EntityKind.NETFLOW: AbsType.PUBLIC_NETFLOW,
    }

    def lookup(self, kind: EntityKind, name: str, addr: Optional[str] = None) -> AbsType:
        norm = normalize_name(kind, name)
        for rule in self.rules:
            if rule.kind is kind and rule.matches(norm, addr):
                return rule.abs
        return self.CATCH_ALL[kind]

    @classmethod
    def from_dict(cls, doc: dict) -> "AbstractionRules":
        rules = []
        for i, entry in enumerate(doc.get("rules", [])):
            try:
                rules.append(
                    AbstractionRule(
                        kind=EntityKind(entry["kind"]),
                        abs=AbsType(entry["abs"]),
                        prefixes=tuple(entry.get("prefixes", ())),
                        globs=tuple(entry.get("globs", ())),
                        cidrs=tuple(entry.get("cidrs", ())),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise ValueError(f"rules[{i}]: {exc}") from exc
        return cls(rules=rules, version=int(doc.get("version", 1)))

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "rules": [
                {
                    "kind": r.kind.value,
                    "abs": r.abs.value,
                    **({"prefixes": list(r.prefixes)} if r.prefixes else {}),
                    **({"globs": list(r.globs)} if r.globs else {}),
                    **({"cidrs": list(r.cidrs)} if r.cidrs else {}),
                }
                for r in self.rules
            ],
        }

    @classmethod
    def load(cls, path) -> "AbstractionRules":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def _pr(abs_type: AbsType, *globs: str) -> AbstractionRule:
    return AbstractionRule(kind=EntityKind.PROCESS, abs=abs_type, globs=globs)


def _fr(abs_type: AbsType, *prefixes: str) -> AbstractionRule:
    return AbstractionRule(kind=EntityKind.FILE, abs=abs_type, prefixes=prefixes)


DEFAULT_RULES = AbstractionRules(
    rules=[
        # processes: matched on lowercase basename
        _pr(
            AbsType.SYS_PROCESS,
            "systemd*", "init", "cron*", "journald", "udevd", "dbus-daemon",
            "kthreadd", "svchost*", "services.exe", "wininit*", "lsass*",
            "smss*", "csrss*", "winlogon*",
        ),
        _pr(
            AbsType.SERV_PROCESS,
            "sshd*", "nginx*", "httpd*", "apache2*", "mysqld*", "postgres*",
            "redis-server*", "smbd*",
        ),
        _pr(
            AbsType.UTIL_PROCESS,
            "cmd", "cmd.exe", "sh", "bash", "zsh", "dash", "powershell*",
            "pwsh*", "cp", "mv", "tar", "curl", "wget", "grep", "sed", "awk",
        ),
        _pr(AbsType.WEB_PROCESS, "firefox*", "chrome*", "chromium*", "msedge*", "safari*"),
        _pr(
            AbsType.USR_PROCESS,
            "word*", "excel*", "notepad*", "vim", "emacs*", "gedit", "vlc*",
            "libreoffice*", "evince", "thunderbird*", "slack*",
        ),
        # files: matched on normalized path prefix
        _fr(AbsType.LIB_FILE, "/lib", "/usr/lib"),
        _fr(AbsType.CFG_FILE, "/etc"),
        _fr(AbsType.TMP_FILE, "/tmp", "/var/tmp"),
        _fr(AbsType.SYS_FILE, "/bin", "/sbin", "/usr/bin", "/boot", "/sys", "/proc"),
        AbstractionRule(
            kind=EntityKind.FILE,
            abs=AbsType.USR_FILE,
            prefixes=("/home", "/root"),
            globs=("*documents*",),
        ),
        AbstractionRule(
            kind=EntityKind.NETFLOW,
            abs=AbsType.PRIVATE_NETFLOW,
            cidrs=("10.0.0.0/8", "172.16.0.0/12", "192.168.0.0/16", "127.0.0.0/8", "::1/128"),
        ),
    ]
)


def abstract_node(
    kind: EntityKind,
    name: str,
    addr: Optional[str] = None,
    rules: Optional[AbstractionRules] = None,
) -> AbsType:
    """Map a concrete node to its abstract type; total via per-kind catch-alls."""
    return (rules or DEFAULT_RULES).lookup(kind, name, addr)
