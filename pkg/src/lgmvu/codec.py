"""Canonical binary encoding of schema-typed values.

Values are plain Python data: ``bool``, ``int``, ``float``, ``str``, tuples
for lists (lists are accepted when encoding), dicts for records and
:class:`Variant` for sums.  Wire rules, all big-endian:

    Bool     1 byte, 0x00 or 0x01
    Int64    8 bytes two's complement
    Float64  8 bytes IEEE-754
    String   u32 byte length + UTF-8
    List     u32 count + items
    Record   fields in declaration order
    Sum      u8 declaration index + payload when the variant has one
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Any

from lgmvu.schema import ListOf, Named, Prim, Record, Schema, Sum, TypeRef

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1
MAX_DEPTH = 256

_U32 = struct.Struct(">I")
_I64 = struct.Struct(">q")
_F64 = struct.Struct(">d")


@dataclass(frozen=True)
class Variant:
    """A sum value: the variant name and its payload (``None`` when absent)."""

    tag: str
    value: Any = None

    def __repr__(self) -> str:
        return self.tag if self.value is None else f"{self.tag}({self.value!r})"


class CodecError(Exception):
    pass


class TypeMismatch(CodecError):
    def __init__(self, path: str, detail: str):
        super().__init__(f"at {path or '<root>'}: {detail}")
        self.path = path
        self.detail = detail


class DecodeError(CodecError):
    pass


class Truncated(DecodeError):
    pass


class TrailingBytes(DecodeError):
    pass


class BadVariantIndex(DecodeError):
    pass


class BadUtf8(DecodeError):
    pass


class BadBool(DecodeError):
    pass


class TooDeep(DecodeError):
    pass


def encode(schema: Schema, ty: TypeRef, value: Any) -> bytes:
    out = bytearray()
    _encode(schema, ty, value, out, "", 0)
    return bytes(out)


def _encode(schema: Schema, ty: TypeRef, value: Any, out: bytearray, path: str, depth: int) -> None:
    if depth > MAX_DEPTH:
        raise TypeMismatch(path, f"nesting deeper than {MAX_DEPTH}")
    ty = schema.resolve(ty)
    if isinstance(ty, Prim):
        _encode_prim(ty.name, value, out, path)
    elif isinstance(ty, ListOf):
        if not isinstance(value, (list, tuple)):
            raise TypeMismatch(path, f"expected list, got {type(value).__name__}")
        if len(value) > 0xFFFFFFFF:
            raise TypeMismatch(path, "list too long")
        out += _U32.pack(len(value))
        for i, item in enumerate(value):
            _encode(schema, ty.item, item, out, f"{path}[{i}]", depth + 1)
    elif isinstance(ty, Record):
        if not isinstance(value, dict):
            raise TypeMismatch(path, f"expected record, got {type(value).__name__}")
        names = [n for n, _ in ty.fields]
        if set(value) != set(names):
            raise TypeMismatch(path, f"record fields {sorted(value)} != {sorted(names)}")
        for name, fty in ty.fields:
            _encode(schema, fty, value[name], out, f"{path}.{name}", depth + 1)
    elif isinstance(ty, Sum):
        if not isinstance(value, Variant):
            raise TypeMismatch(path, f"expected variant, got {type(value).__name__}")
        try:
            index = ty.index_of(value.tag)
        except KeyError:
            raise TypeMismatch(path, f"unknown variant {value.tag!r}") from None
        payload = ty.variants[index][1]
        out.append(index)
        if payload is None:
            if value.value is not None:
                raise TypeMismatch(path, f"variant {value.tag!r} takes no payload")
        else:
            _encode(schema, payload, value.value, out, f"{path}<{value.tag}>", depth + 1)
    else:  # pragma: no cover - resolve() never returns Named
        raise TypeMismatch(path, f"unknown type {ty!r}")


def _encode_prim(name: str, value: Any, out: bytearray, path: str) -> None:
    if name == "Bool":
        if not isinstance(value, bool):
            raise TypeMismatch(path, f"expected Bool, got {type(value).__name__}")
        out.append(1 if value else 0)
    elif name == "Int64":
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeMismatch(path, f"expected Int64, got {type(value).__name__}")
        if not INT64_MIN <= value <= INT64_MAX:
            raise TypeMismatch(path, f"{value} outside Int64 range")
        out += _I64.pack(value)
    elif name == "Float64":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeMismatch(path, f"expected Float64, got {type(value).__name__}")
        out += _F64.pack(float(value))
    elif name == "String":
        if not isinstance(value, str):
            raise TypeMismatch(path, f"expected String, got {type(value).__name__}")
        try:
            raw = value.encode("utf-8")
        except UnicodeEncodeError:
            raise TypeMismatch(path, "string is not encodable as UTF-8") from None
        out += _U32.pack(len(raw)) + raw


def decode(schema: Schema, ty: TypeRef, data: bytes) -> Any:
    """Decode exactly ``data``; raises a :class:`DecodeError` on any defect."""
    value, end = decode_prefix(schema, ty, data, 0)
    if end != len(data):
        raise TrailingBytes(f"{len(data) - end} unread bytes")
    return value


def decode_prefix(schema: Schema, ty: TypeRef, data: bytes, pos: int) -> tuple[Any, int]:
    return _Decoder(schema, memoryview(data)).read(ty, pos, 0)


class _Decoder:
    def __init__(self, schema: Schema, data: memoryview):
        self.schema = schema
        self.data = data

    def take(self, pos: int, n: int) -> bytes:
        if pos + n > len(self.data):
            raise Truncated(f"need {n} bytes at offset {pos}, have {len(self.data) - pos}")
        return bytes(self.data[pos : pos + n])

    def read(self, ty: TypeRef, pos: int, depth: int) -> tuple[Any, int]:
        if depth > MAX_DEPTH:
            raise TooDeep(f"nesting deeper than {MAX_DEPTH}")
        ty = self.schema.resolve(ty)
        if isinstance(ty, Prim):
            return self.read_prim(ty.name, pos)
        if isinstance(ty, ListOf):
            (count,) = _U32.unpack(self.take(pos, 4))
            pos += 4
            # every encodable type occupies at least one byte
            if count > len(self.data) - pos:
                raise Truncated(f"list of {count} items cannot fit in {len(self.data) - pos} bytes")
            items = []
            for _ in range(count):
                item, pos = self.read(ty.item, pos, depth + 1)
                items.append(item)
            return tuple(items), pos
        if isinstance(ty, Record):
            rec = {}
            for name, fty in ty.fields:
                rec[name], pos = self.read(fty, pos, depth + 1)
            return rec, pos
        if isinstance(ty, Sum):
            index = self.take(pos, 1)[0]
            pos += 1
            if index >= len(ty.variants):
                raise BadVariantIndex(f"index {index} but only {len(ty.variants)} variants")
            tag, payload = ty.variants[index]
            if payload is None:
                return Variant(tag), pos
            value, pos = self.read(payload, pos, depth + 1)
            return Variant(tag, value), pos
        raise DecodeError(f"unknown type {ty!r}")  # pragma: no cover

    def read_prim(self, name: str, pos: int) -> tuple[Any, int]:
        if name == "Bool":
            b = self.take(pos, 1)[0]
            if b > 1:
                raise BadBool(f"byte 0x{b:02x} at offset {pos}")
            return b == 1, pos + 1
        if name == "Int64":
            return _I64.unpack(self.take(pos, 8))[0], pos + 8
        if name == "Float64":
            return _F64.unpack(self.take(pos, 8))[0], pos + 8
        (n,) = _U32.unpack(self.take(pos, 4))
        raw = self.take(pos + 4, n)
        try:
            return raw.decode("utf-8"), pos + 4 + n
        except UnicodeDecodeError as exc:
            raise BadUtf8(str(exc)) from None


def values_equal(a: Any, b: Any) -> bool:
    """Structural equality treating NaN as equal to itself and lists as tuples."""
    if isinstance(a, float) and isinstance(b, float):
        return a == b or (math.isnan(a) and math.isnan(b))
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(values_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(values_equal(a[k], b[k]) for k in a)
    if isinstance(a, Variant) and isinstance(b, Variant):
        return a.tag == b.tag and values_equal(a.value, b.value)
    if type(a) is not type(b) and (isinstance(a, bool) or isinstance(b, bool)):
        return False
    return a == b
