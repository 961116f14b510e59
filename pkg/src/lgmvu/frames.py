"""Wire frames exchanged between clients and the sequencing server.

A frame is a one-byte tag followed by its fields in declaration order, using
the same big-endian primitive rules as the value codec (``bytes`` and ``str``
fields carry a u32 length prefix, fingerprints are a fixed 32 bytes).  On a
stream each frame is preceded by a u32 big-endian length.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, fields
from typing import ClassVar, Union

PROTOCOL_VERSION = 1
FINGERPRINT_SIZE = 32
LENGTH_PREFIX = struct.Struct(">I")


class ErrorCode(enum.IntEnum):
    SCHEMA_MISMATCH = 1
    NOT_JOINED = 2
    BAD_PAYLOAD = 3
    FRAME_TOO_LARGE = 4
    SHUTDOWN = 5
    PROTOCOL_VIOLATION = 6
    BAD_VERSION = 7
    EXPIRED = 8
    APP_FAULT = 9
    DUPLICATE = 10


class FrameError(Exception):
    pass


class Truncated(FrameError):
    pass


class UnknownTag(FrameError):
    pass


class TrailingBytes(FrameError):
    pass


# field kinds: u16 u32 u64 fp bytes str
@dataclass(frozen=True)
class Hello:
    TAG: ClassVar[int] = 0
    LAYOUT: ClassVar[tuple[str, ...]] = ("u16", "fp", "str")
    protocol_version: int
    fingerprint: bytes
    session: str


@dataclass(frozen=True)
class Welcome:
    TAG: ClassVar[int] = 1
    LAYOUT: ClassVar[tuple[str, ...]] = ("u32", "u64", "bytes")
    client_id: int
    seq: int
    snapshot: bytes


@dataclass(frozen=True)
class Submit:
    TAG: ClassVar[int] = 2
    LAYOUT: ClassVar[tuple[str, ...]] = ("u64", "bytes")
    client_msg_id: int
    payload: bytes


@dataclass(frozen=True)
class Apply:
    TAG: ClassVar[int] = 3
    LAYOUT: ClassVar[tuple[str, ...]] = ("u64", "u32", "bytes")
    seq: int
    origin: int
    payload: bytes


@dataclass(frozen=True)
class ResyncReq:
    TAG: ClassVar[int] = 4
    LAYOUT: ClassVar[tuple[str, ...]] = ("u64",)
    have_seq: int


@dataclass(frozen=True)
class ResyncSnapshot:
    TAG: ClassVar[int] = 5
    LAYOUT: ClassVar[tuple[str, ...]] = ("u64", "bytes")
    seq: int
    snapshot: bytes


@dataclass(frozen=True)
class Error:
    TAG: ClassVar[int] = 6
    LAYOUT: ClassVar[tuple[str, ...]] = ("u16", "str")
    code: int
    detail: str


@dataclass(frozen=True)
class Ping:
    TAG: ClassVar[int] = 7
    LAYOUT: ClassVar[tuple[str, ...]] = ("u64",)
    nonce: int


@dataclass(frozen=True)
class Pong:
    TAG: ClassVar[int] = 8
    LAYOUT: ClassVar[tuple[str, ...]] = ("u64",)
    nonce: int


Frame = Union[Hello, Welcome, Submit, Apply, ResyncReq, ResyncSnapshot, Error, Ping, Pong]
FRAME_TYPES: dict[int, type] = {
    cls.TAG: cls for cls in (Hello, Welcome, Submit, Apply, ResyncReq, ResyncSnapshot, Error, Ping, Pong)
}

_INTS = {"u16": struct.Struct(">H"), "u32": struct.Struct(">I"), "u64": struct.Struct(">Q")}


def encode_frame(frame: Frame) -> bytes:
    out = bytearray([frame.TAG])
    for kind, f in zip(frame.LAYOUT, fields(frame)):
        value = getattr(frame, f.name)
        if kind in _INTS:
            try:
                out += _INTS[kind].pack(value)
            except struct.error as exc:
                raise FrameError(f"{type(frame).__name__}.{f.name}={value!r}: {exc}") from None
        elif kind == "fp":
            if len(value) != FINGERPRINT_SIZE:
                raise FrameError(f"fingerprint must be {FINGERPRINT_SIZE} bytes")
            out += value
        else:
            raw = value.encode("utf-8") if kind == "str" else bytes(value)
            out += LENGTH_PREFIX.pack(len(raw)) + raw
    return bytes(out)


def decode_frame(data: bytes) -> Frame:
    if not data:
        raise Truncated("empty frame")
    cls = FRAME_TYPES.get(data[0])
    if cls is None:
        raise UnknownTag(f"tag {data[0]}")
    pos = 1
    values = []

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise Truncated(f"{cls.__name__}: need {n} bytes at offset {pos}")
        chunk = bytes(data[pos : pos + n])
        pos += n
        return chunk

    for kind in cls.LAYOUT:
        if kind in _INTS:
            st = _INTS[kind]
            values.append(st.unpack(take(st.size))[0])
        elif kind == "fp":
            values.append(take(FINGERPRINT_SIZE))
        else:
            (n,) = LENGTH_PREFIX.unpack(take(4))
            raw = take(n)
            if kind == "str":
                try:
                    values.append(raw.decode("utf-8"))
                except UnicodeDecodeError as exc:
                    raise FrameError(f"bad UTF-8 in {cls.__name__}: {exc}") from None
            else:
                values.append(raw)
    if pos != len(data):
        raise TrailingBytes(f"{cls.__name__}: {len(data) - pos} unread bytes")
    return cls(*values)


def with_length(frame_bytes: bytes) -> bytes:
    return LENGTH_PREFIX.pack(len(frame_bytes)) + frame_bytes
