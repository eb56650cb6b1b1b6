"""Knowledge messages and their length-prefixed wire frames.

Frame layout (little-endian)::

    u32 length of everything after this field
    u8  message kind (0 = knowledge)
    u16 sender_id
    u64 update_counter
    f64 accumulated reward (UNSCORED_BITS when no episode has completed)
    u64 wall_step
    policy snapshot, then optionally the value snapshot (nn snapshot format)
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

from ..nn import FormatError, read_snapshot

KIND_KNOWLEDGE = 0
UNSCORED_BITS = 0x7FF8_0000_554E_5343  # quiet NaN, payload "UNSC"
_BODY = struct.Struct("<HQQQ")
_PREFIX = struct.Struct("<IB")
MAX_FRAME = 1 << 30


@dataclass(frozen=True)
class KnowledgeMessage:
    sender_id: int
    policy_model: bytes
    value_model: bytes | None
    accumulated_reward: float | None  # None = unscored
    update_counter: int
    wall_step: int


def ar_key(ar: float | None) -> float:
    """Ordering key: unscored sorts below every score."""
    return -math.inf if ar is None else ar


def _encode_ar(ar: float | None) -> int:
    if ar is None:
        return UNSCORED_BITS
    if math.isnan(ar):
        raise ValueError("NaN accumulated reward is reserved for the unscored sentinel")
    return struct.unpack("<Q", struct.pack("<d", ar))[0]


def _decode_ar(bits: int) -> float | None:
    if bits == UNSCORED_BITS:
        return None
    value = struct.unpack("<d", struct.pack("<Q", bits))[0]
    if math.isnan(value):
        raise FormatError("NaN accumulated reward that is not the unscored sentinel")
    return value


def encode_message(msg: KnowledgeMessage) -> bytes:
    head = _BODY.pack(msg.sender_id, msg.update_counter, _encode_ar(msg.accumulated_reward), msg.wall_step)
    return head + msg.policy_model + (msg.value_model or b"")


def decode_message(body: bytes) -> KnowledgeMessage:
    if len(body) < _BODY.size:
        raise FormatError(f"truncated knowledge message: {len(body)} bytes")
    sender, counter, ar_bits, wall = _BODY.unpack_from(body, 0)
    pos = _BODY.size
    _, end = read_snapshot(body, pos)
    policy = bytes(body[pos:end])
    value = None
    if end < len(body):
        _, vend = read_snapshot(body, end)
        if vend != len(body):
            raise FormatError(f"{len(body) - vend} trailing bytes at offset {vend}")
        value = bytes(body[end:vend])
    return KnowledgeMessage(sender, policy, value, _decode_ar(ar_bits), counter, wall)


def encode_frame(msg: KnowledgeMessage) -> bytes:
    body = encode_message(msg)
    return _PREFIX.pack(len(body) + 1, KIND_KNOWLEDGE) + body


def decode_frame(frame: bytes) -> KnowledgeMessage:
    if len(frame) < _PREFIX.size:
        raise FormatError("truncated frame header")
    length, kind = _PREFIX.unpack_from(frame, 0)
    if len(frame) != 4 + length:
        raise FormatError(f"frame length field {length} does not match {len(frame) - 4} bytes")
    if kind != KIND_KNOWLEDGE:
        raise FormatError(f"unknown message kind {kind}")
    return decode_message(frame[_PREFIX.size:])


def _recv_exact(sock, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if buf:
                raise FormatError("stream closed mid-frame")
            return None
        buf += chunk
    return bytes(buf)


def send_frame(sock, msg: KnowledgeMessage) -> None:
    sock.sendall(encode_frame(msg))


def recv_frame(sock) -> KnowledgeMessage | None:
    """Read one frame from a stream socket; None on clean end of stream."""
    head = _recv_exact(sock, 4)
    if head is None:
        return None
    (length,) = struct.unpack("<I", head)
    if not 1 <= length <= MAX_FRAME:
        raise FormatError(f"implausible frame length {length}")
    rest = _recv_exact(sock, length)
    if rest is None:
        raise FormatError("stream closed mid-frame")
    return decode_frame(head + rest)
