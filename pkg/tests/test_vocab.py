import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from provhunt.vocab import (
    ABS_CODE,
    ABS_KIND,
    DEFAULT_RULES,
    N_ABS_TYPES,
    OP_FROM_CODE,
    OPS_BY_OBJECT_KIND,
    WIRE_CODE,
    AbsType,
    AbstractionRules,
    EdgeOp,
    EntityKind,
    abs_sets,
    abstract_node,
)


def test_entity_kind_has_three_variants():
    assert {k.value for k in EntityKind} == {"process", "file", "netflow"}


def test_seventeen_ops_sixteen_codes():
    assert len(EdgeOp) == 17
    assert len(set(WIRE_CODE.values())) == 16
    assert all(0 <= c < 16 for c in WIRE_CODE.values())


def test_start_shares_code_with_connect_and_decodes_to_connect():
    assert WIRE_CODE[EdgeOp.START] == WIRE_CODE[EdgeOp.CONNECT]
    assert OP_FROM_CODE[WIRE_CODE[EdgeOp.START]] is EdgeOp.CONNECT
    # all other codes are injective
    others = [op for op in EdgeOp if op is not EdgeOp.START]
    assert len({WIRE_CODE[op] for op in others}) == 16


def test_ops_by_object_kind_matches_vocabulary():
    assert OPS_BY_OBJECT_KIND[EntityKind.PROCESS] == {
        EdgeOp.FORK, EdgeOp.EXEC, EdgeOp.MODIFY, EdgeOp.OPEN,
    }
    assert len(OPS_BY_OBJECT_KIND[EntityKind.FILE]) == 9
    assert len(OPS_BY_OBJECT_KIND[EntityKind.NETFLOW]) == 5


def test_abs_type_count_and_codes():
    assert N_ABS_TYPES == 14
    assert sorted(ABS_CODE.values()) == list(range(14))
    assert all(code < 16 for code in ABS_CODE.values())


def test_abs_sets_partition():
    p, f, n = abs_sets()
    assert (len(p), len(f), len(n)) == (6, 6, 2)
    assert p | f | n == set(AbsType)
    assert not (p & f) and not (p & n) and not (f & n)
    assert AbsType.UTIL_PROCESS in p


@pytest.mark.parametrize(
    "kind,name,addr,expected",
    [
        (EntityKind.FILE, "/etc/passwd", None, AbsType.CFG_FILE),
        (EntityKind.NETFLOW, "flow", "10.0.0.5", AbsType.PRIVATE_NETFLOW),
        (EntityKind.NETFLOW, "flow", "127.0.0.1:80", AbsType.PRIVATE_NETFLOW),
        (EntityKind.NETFLOW, "flow", "53.192.68.50:443", AbsType.PUBLIC_NETFLOW),
        (EntityKind.FILE, "/nonexistent/zzz", None, AbsType.UNKNOWN_FILE),
        (EntityKind.FILE, "/usr/lib/libc.so", None, AbsType.LIB_FILE),
        (EntityKind.FILE, "/tmp/payload.bin", None, AbsType.TMP_FILE),
        (EntityKind.FILE, "/bin/ls", None, AbsType.SYS_FILE),
        (EntityKind.FILE, "/home/alice/notes.txt", None, AbsType.USR_FILE),
        (EntityKind.FILE, "C:\\Users\\a\\Documents\\x.doc", None, AbsType.USR_FILE),
        (EntityKind.PROCESS, "/usr/bin/bash", None, AbsType.UTIL_PROCESS),
        (EntityKind.PROCESS, "FIREFOX.EXE", None, AbsType.WEB_PROCESS),
        (EntityKind.PROCESS, "sshd", None, AbsType.SERV_PROCESS),
        (EntityKind.PROCESS, "systemd-journald", None, AbsType.SYS_PROCESS),
        (EntityKind.PROCESS, "mystery_binary", None, AbsType.UNKNOWN_PROCESS),
    ],
)
def test_default_abstraction_examples(kind, name, addr, expected):
    assert abstract_node(kind, name, addr) is expected


@given(
    kind=st.sampled_from(list(EntityKind)),
    name=st.text(min_size=1, max_size=40),
    addr=st.one_of(st.none(), st.from_regex(r"\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3}", fullmatch=True)),
)
def test_abstraction_total_and_kind_consistent(kind, name, addr):
    out = abstract_node(kind, name, addr if kind is EntityKind.NETFLOW else None)
    assert ABS_KIND[out] is kind
    # determinism
    assert abstract_node(kind, name, addr if kind is EntityKind.NETFLOW else None) is out


def test_rules_file_round_trip(tmp_path):
    path = tmp_path / "rules.json"
    DEFAULT_RULES.save(path)
    loaded = AbstractionRules.load(path)
    assert loaded.to_dict() == DEFAULT_RULES.to_dict()
    assert loaded.lookup(EntityKind.FILE, "/etc/hosts") is AbsType.CFG_FILE


def test_rules_file_rejects_unknown_abs(tmp_path):
    path = tmp_path / "rules.json"
    path.write_text(json.dumps({"rules": [{"kind": "file", "abs": "no_such_type"}]}))
    with pytest.raises(ValueError, match="rules\\[0\\]"):
        AbstractionRules.load(path)


def test_first_match_wins():
    rules = AbstractionRules(
        rules=[
            AbstractionRule_for_test("/etc", AbsType.TMP_FILE),
            AbstractionRule_for_test("/etc", AbsType.CFG_FILE),
        ]
    )
    assert rules.lookup(EntityKind.FILE, "/etc/passwd") is AbsType.TMP_FILE


def AbstractionRule_for_test(prefix, abs_type):
    from provhunt.vocab import AbstractionRule

    return AbstractionRule(kind=EntityKind.FILE, abs=abs_type, prefixes=(prefix,))
