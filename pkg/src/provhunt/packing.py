"""Bit-level codecs for the packed graph store.

Edge records are fixed-width little-endian words. Subject-side records carry
the full event (relative object index, op code, flow direction, split
timestamp, version snapshot); object-side records are back-references holding
only the relative subject index, op code, and direction. Sparse and extended
forms differ in index width and version width. All relative indices are
signed two's complement.

Word layouts (bit offsets, LSB first):

  sparse subject, 64 bits:  [0:11] obj_delta  [11:15] type  [15] dir
                            [16:43] ts  [43:48] date  [48:56] version  [56:64] rsv
  sparse object, 32 bits:   [0:16] sbj_delta  [16:20] type  [20] dir  [21:32] rsv
  extended subject, 96 bits:[0:27] obj_delta  [27:31] type  [31] dir
                            [32:59] ts  [59:64] date  [64:80] version  [80:96] rsv
  extended object, 64 bits: [0:32] sbj_delta  [32:36] type  [36] dir  [37:64] rsv
  node meta, 32 bits:       [0:4] abs  [4] exp  [5:21] version  [21:26] date0  [26:32] rsv

The 32-bit node index is stored alongside the meta word (8 bytes per header).
"""

from __future__ import annotations

MS_PER_DAY = 86_400_000  # fits 27 bits (2^27 = 134,217,728)

SPARSE_OBJ_DELTA_MIN, SPARSE_OBJ_DELTA_MAX = -1024, 1023  # 11-bit signed
SPARSE_SBJ_DELTA_MIN, SPARSE_SBJ_DELTA_MAX = -32768, 32767  # 16-bit signed
EXT_OBJ_DELTA_MIN, EXT_OBJ_DELTA_MAX = -(1 << 26), (1 << 26) - 1  # 27-bit signed
EXT_SBJ_DELTA_MIN, EXT_SBJ_DELTA_MAX = -(1 << 31), (1 << 31) - 1  # 32-bit signed

TS_MAX = MS_PER_DAY - 1
DATE_MAX = 31
VERSION8_MAX = 255
VERSION16_MAX = 65535

SPARSE_QUEUE_CAP = 16

# accounting constants (bytes)
SPARSE_SUBJECT_BYTES = 8
SPARSE_OBJECT_BYTES = 4
EXT_SUBJECT_BYTES = 12
EXT_OBJECT_BYTES = 8
NODE_HEADER_BYTES = 8
QUEUE_HANDLE_BYTES = 8


def _to_twos(value: int, width: int) -> int:
    return value & ((1 << width) - 1)


def _from_twos(raw: int, width: int) -> int:
    if raw >= 1 << (width - 1):
        raw -= 1 << width
    return raw


def _check(cond: bool, what: str) -> None:
    if not cond:
        raise ValueError(what)


def pack_sparse_subject(obj_delta: int, type_code: int, dir_bit: int, ts: int, date: int, version: int) -> int:
    _check(SPARSE_OBJ_DELTA_MIN <= obj_delta <= SPARSE_OBJ_DELTA_MAX, f"obj_delta {obj_delta} outside 11-bit range")
    _check(0 <= type_code < 16, f"type code {type_code} outside 4 bits")
    _check(dir_bit in (0, 1), "dir bit must be 0 or 1")
    _check(0 <= ts <= TS_MAX, f"ts {ts} outside 27-bit day range")
    _check(0 <= date <= DATE_MAX, f"date {date} outside 5 bits")
    _check(0 <= version <= VERSION8_MAX, f"version {version} outside 8 bits")
    return (
        _to_twos(obj_delta, 11)
        | type_code << 11
        | dir_bit << 15
        | ts << 16
        | date << 43
        | version << 48
    )


def unpack_sparse_subject(word: int) -> tuple[int, int, int, int, int, int]:
    return (
        _from_twos(word & 0x7FF, 11),
        (word >> 11) & 0xF,
        (word >> 15) & 0x1,
        (word >> 16) & 0x7FFFFFF,
        (word >> 43) & 0x1F,
        (word >> 48) & 0xFF,
    )


def pack_sparse_object(sbj_delta: int, type_code: int, dir_bit: int) -> int:
    _check(SPARSE_SBJ_DELTA_MIN <= sbj_delta <= SPARSE_SBJ_DELTA_MAX, f"sbj_delta {sbj_delta} outside 16-bit range")
    _check(0 <= type_code < 16, f"type code {type_code} outside 4 bits")
    _check(dir_bit in (0, 1), "dir bit must be 0 or 1")
    return _to_twos(sbj_delta, 16) | type_code << 16 | dir_bit << 20


def unpack_sparse_object(word: int) -> tuple[int, int, int]:
    return (
        _from_twos(word & 0xFFFF, 16),
        (word >> 16) & 0xF,
        (word >> 20) & 0x1,
    )


def pack_ext_subject(obj_delta: int, type_code: int, dir_bit: int, ts: int, date: int, version: int) -> int:
    _check(EXT_OBJ_DELTA_MIN <= obj_delta <= EXT_OBJ_DELTA_MAX, f"obj_delta {obj_delta} outside 27-bit range")
    _check(0 <= type_code < 16, f"type code {type_code} outside 4 bits")
    _check(dir_bit in (0, 1), "dir bit must be 0 or 1")
    _check(0 <= ts <= TS_MAX, f"ts {ts} outside 27-bit day range")
    _check(0 <= date <= DATE_MAX, f"date {date} outside 5 bits")
    _check(0 <= version <= VERSION16_MAX, f"version {version} outside 16 bits")
    return (
        _to_twos(obj_delta, 27)
        | type_code << 27
        | dir_bit << 31
        | ts << 32
        | date << 59
        | version << 64
    )


def unpack_ext_subject(word: int) -> tuple[int, int, int, int, int, int]:
    return (
        _from_twos(word & 0x7FFFFFF, 27),
        (word >> 27) & 0xF,
        (word >> 31) & 0x1,
        (word >> 32) & 0x7FFFFFF,
        (word >> 59) & 0x1F,
        (word >> 64) & 0xFFFF,
    )


def pack_ext_object(sbj_delta: int, type_code: int, dir_bit: int) -> int:
    _check(EXT_SBJ_DELTA_MIN <= sbj_delta <= EXT_SBJ_DELTA_MAX, f"sbj_delta {sbj_delta} outside 32-bit range")
    _check(0 <= type_code < 16, f"type code {type_code} outside 4 bits")
    _check(dir_bit in (0, 1), "dir bit must be 0 or 1")
    return _to_twos(sbj_delta, 32) | type_code << 32 | dir_bit << 36


def unpack_ext_object(word: int) -> tuple[int, int, int]:
    return (
        _from_twos(word & 0xFFFFFFFF, 32),
        (word >> 32) & 0xF,
        (word >> 36) & 0x1,
    )


def pack_node_meta(abs_code: int, exp: int, version: int, date0: int) -> int:
    _check(0 <= abs_code < 16, f"abs code {abs_code} outside 4 bits")
    _check(exp in (0, 1), "exp must be 0 or 1")
    _check(0 <= version <= VERSION16_MAX, f"version {version} outside 16 bits")
    _check(0 <= date0 <= DATE_MAX, f"date0 {date0} outside 5 bits")
    return abs_code | exp << 4 | version << 5 | date0 << 21


def unpack_node_meta(word: int) -> tuple[int, int, int, int]:
    return (
        word & 0xF,
        (word >> 4) & 0x1,
        (word >> 5) & 0xFFFF,
        (word >> 21) & 0x1F,
    )


def split_ts(ts_ms: int, origin_day_start: int) -> tuple[int, int]:
    """Split an epoch-ms timestamp into (relative day, ms within day).

    The origin is the day start of the stream's first event; streams spanning
    more than 32 relative days do not fit the 5-bit date field and are a hard
    error by design.
    """
    rel = ts_ms - origin_day_start
    if rel < 0:
        raise ValueError(f"timestamp {ts_ms} precedes the stream's first day")
    date, ms = divmod(rel, MS_PER_DAY)
    if date > DATE_MAX:
        raise ValueError(
            f"timestamp {ts_ms} is {date} days after the first event; "
            f"the 5-bit date field covers at most {DATE_MAX + 1} days"
        )
    return date, ms


def join_ts(date: int, ms: int, origin_day_start: int) -> int:
    return origin_day_start + date * MS_PER_DAY + ms


def day_start(ts_ms: int) -> int:
    return (ts_ms // MS_PER_DAY) * MS_PER_DAY
