"""Byte encoding of wire messages (see docs/payload_codec.md).

Frame: tag byte, u16 session-id length, session id as compact UTF-8 JSON,
u16 element count, then each element as a little-endian u64.
"""

from __future__ import annotations

import json
import struct

TAGS = {
    # AVSS
    "SHARE": 0x01,
    "ECHO": 0x02,
    "READY": 0x03,
    "COMPLAINT": 0x04,
    # openings
    "OPEN": 0x08,
    "MPC_OPEN": 0x09,
    "MPC_OUT": 0x0A,
    "GATE_OPEN": 0x0B,
    "OUT_REC": 0x0C,
    # reliable broadcast and agreement
    "RBC_INIT": 0x10,
    "RBC_ECHO": 0x11,
    "RBC_READY": 0x12,
    "BA_VOTE": 0x18,
    "BA_EST": 0x19,
    "BA_AUX": 0x1A,
    "BA_DECIDE": 0x1B,
    # gate evaluation
    "XFER_L": 0x20,
    "XFER_R": 0x21,
    # counting and output
    "FLAG": 0x30,
    "COUNT": 0x31,
    "DONE": 0x32,
    "SUM": 0x33,
    "OUT": 0x34,
    "RESULT": 0x35,
}
_BY_BYTE = {v: k for k, v in TAGS.items()}


class CodecError(ValueError):
    pass


def _sid_json(sid) -> str:
    return json.dumps(sid, separators=(",", ":"))


def _sid_back(obj):
    return tuple(_sid_back(x) for x in obj) if isinstance(obj, list) else obj


def encode(sid, tag: str, payload) -> bytes:
    try:
        code = TAGS[tag]
    except KeyError:
        raise CodecError(f"unknown tag {tag!r}") from None
    s = _sid_json(sid).encode()
    if len(s) > 0xFFFF or len(payload) > 0xFFFF:
        raise CodecError("frame too large")
    if any(not 0 <= int(v) < 1 << 64 for v in payload):
        raise CodecError("elements must fit in u64")
    return struct.pack(f"<BH{len(s)}sH{len(payload)}Q", code, len(s), s, len(payload), *payload)


def decode(frame: bytes) -> tuple:
    """Inverse of :func:`encode`: ``(sid, tag, payload)``."""
    try:
        code, slen = struct.unpack_from("<BH", frame, 0)
        off = 3
        s = frame[off : off + slen]
        off += slen
        (count,) = struct.unpack_from("<H", frame, off)
        off += 2
        payload = struct.unpack_from(f"<{count}Q", frame, off)
    except struct.error as exc:
        raise CodecError(f"truncated frame: {exc}") from None
    if off + 8 * count != len(frame):
        raise CodecError("trailing bytes")
    if code not in _BY_BYTE:
        raise CodecError(f"unknown tag byte {code:#04x}")
    return _sid_back(json.loads(s.decode())), _BY_BYTE[code], tuple(payload)
