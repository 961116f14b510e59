"""Schema language for replicated data.

Source is a small declaration language, one statement per line (or separated
by ``;``).  Comments start with ``#`` or ``--``.  Brackets may span lines and
a line starting with ``|`` (or following a trailing ``=`` or ``|``) continues the
previous statement::

    type Point = { x: Int64, y: Int64 }
    type Shape = Circle | Square | Poly(List Point)
    type Id = Int64
    global model Shape
    global msg SetShape(Shape) | Reset

A right-hand side that is a bare type name is an alias; a sum with a single
payload-free variant is written with a leading bar (``type Unit = | Unit``).
Inline ``global model``/``global msg`` bodies are declared as the types
``GlobalModel``/``GlobalMsg``.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass
from typing import Iterator, Union

PRIMITIVES = ("Bool", "Int64", "Float64", "String")


class SchemaError(Exception):
    pass


class SchemaSyntaxError(SchemaError):
    def __init__(self, line: int, col: int, detail: str):
        super().__init__(f"{line}:{col}: {detail}")
        self.line = line
        self.col = col
        self.detail = detail


class UnresolvedType(SchemaError):
    def __init__(self, name: str):
        super().__init__(f"unresolved type {name!r}")
        self.name = name


class MissingRoot(SchemaError):
    def __init__(self, which: str):
        super().__init__(f"missing root {which}")
        self.which = which


class IllegalRecursion(SchemaError):
    def __init__(self, name: str):
        super().__init__(f"type {name!r} refers to itself outside a sum or list")
        self.name = name


# -- type expressions -------------------------------------------------------


@dataclass(frozen=True)
class Prim:
    name: str


@dataclass(frozen=True)
class Named:
    name: str


@dataclass(frozen=True)
class ListOf:
    item: TypeRef


TypeRef = Union[Prim, Named, ListOf]


@dataclass(frozen=True)
class Record:
    fields: tuple[tuple[str, TypeRef], ...]


@dataclass(frozen=True)
class Sum:
    variants: tuple[tuple[str, TypeRef | None], ...]

    def index_of(self, name: str) -> int:
        for i, (vname, _) in enumerate(self.variants):
            if vname == name:
                return i
        raise KeyError(name)


Definition = Union[Record, Sum, Prim, Named, ListOf]

GLOBAL_MODEL = "globalModelType"
GLOBAL_MSG = "globalMsgType"


@dataclass(frozen=True)
class Schema:
    definitions: dict[str, Definition]
    global_model: TypeRef
    global_msg: TypeRef

    def resolve(self, ref: TypeRef | Definition) -> Definition:
        """Follow aliases until reaching a non-alias definition."""
        while isinstance(ref, Named):
            ref = self.definitions[ref.name]
        return ref

    def ref(self, name: str) -> TypeRef:
        """Type expression for a primitive or declared type name."""
        if name in PRIMITIVES:
            return Prim(name)
        if name not in self.definitions:
            raise UnresolvedType(name)
        return Named(name)


# -- tokenizer ----------------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<comment>(?:#|--)[^\n]*)|(?P<nl>\n)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>[=|{}(),:;])"
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line, line_start, pos, depth = 1, 0, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise SchemaSyntaxError(line, col, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        if kind == "nl":
            if depth == 0:
                toks.append(_Tok("sep", "\n", line, col))
            line += 1
            line_start = m.end()
        elif kind == "ident":
            toks.append(_Tok("ident", m.group(), line, col))
        elif kind == "punct":
            ch = m.group()
            if ch in "{(":
                depth += 1
            elif ch in "})":
                depth = max(0, depth - 1)
            toks.append(_Tok("sep" if ch == ";" else "punct", ch, line, col))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    # a line starting with '|', or a line ending in '=' or '|', continues the statement
    out: list[_Tok] = []
    for i, tok in enumerate(toks):
        if tok.kind == "sep" and tok.text == "\n":
            if out and out[-1].kind == "punct" and out[-1].text in "=|":
                continue
            j = i + 1
            while j < len(toks) and toks[j].kind == "sep" and toks[j].text == "\n":
                j += 1
            if toks[j].kind == "punct" and toks[j].text == "|":
                continue
        out.append(tok)
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def fail(self, detail: str, tok: _Tok | None = None) -> SchemaSyntaxError:
        tok = tok or self.tok
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        return SchemaSyntaxError(tok.line, tok.col, f"{detail}, found {found}")

    def accept(self, text: str) -> bool:
        if self.tok.kind in ("punct", "ident") and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> None:
        if not self.accept(text):
            raise self.fail(f"expected {text!r}")

    def ident(self, what: str) -> str:
        if self.tok.kind != "ident":
            raise self.fail(f"expected {what}")
        name = self.tok.text
        self.i += 1
        return name

    def statements(self) -> Iterator[tuple[str, object, _Tok]]:
        while True:
            while self.tok.kind == "sep":
                self.i += 1
            if self.tok.kind == "eof":
                return
            start = self.tok
            if self.accept("type"):
                name = self.ident("type name")
                if name in PRIMITIVES:
                    raise self.fail("cannot redefine a primitive", start)
                self.expect("=")
                yield "type", (name, self.body()), start
            elif self.accept("global"):
                which = self.ident("'model' or 'msg'")
                if which not in ("model", "msg"):
                    raise self.fail("expected 'model' or 'msg'", self.toks[self.i - 1])
                yield which, self.body(), start
            else:
                raise self.fail("expected 'type' or 'global'")
            if self.tok.kind not in ("sep", "eof"):
                raise self.fail("expected end of statement")

    def body(self) -> Definition:
        if self.tok.kind == "punct" and self.tok.text == "{":
            return self.record()
        leading_bar = self.accept("|")
        first = self.variant_or_ref()
        if not leading_bar and not (self.tok.kind == "punct" and self.tok.text == "|"):
            return Sum((first,)) if isinstance(first, tuple) else first
        variants = [self._as_variant(first)]
        while self.accept("|"):
            variants.append(self._as_variant(self.variant_or_ref()))
        names = [v[0] for v in variants]
        dup = next((n for n in names if names.count(n) > 1), None)
        if dup:
            raise self.fail(f"duplicate variant {dup!r}")
        return Sum(tuple(variants))

    def _as_variant(self, item: TypeRef | tuple[str, TypeRef | None]) -> tuple[str, TypeRef | None]:
        if isinstance(item, tuple):
            return item
        if isinstance(item, Named):
            return (item.name, None)
        raise self.fail("variant name expected", self.toks[self.i - 1])

    def variant_or_ref(self) -> TypeRef | tuple[str, TypeRef | None]:
        """Either ``Name(payload)`` (a variant) or a type expression."""
        if self.tok.kind == "ident" and self.tok.text not in PRIMITIVES and self.tok.text != "List":
            name = self.ident("name")
            if self.accept("("):
                payload = self.typeref()
                self.expect(")")
                return (name, payload)
            return Named(name)
        return self.typeref()

    def typeref(self) -> TypeRef:
        if self.accept("("):
            ref = self.typeref()
            self.expect(")")
            return ref
        name = self.ident("type")
        if name == "List":
            return ListOf(self.typeref())
        if name in PRIMITIVES:
            return Prim(name)
        return Named(name)

    def record(self) -> Record:
        open_tok = self.tok
        self.expect("{")
        fields: list[tuple[str, TypeRef]] = []
        while self.tok.kind == "sep":
            self.i += 1
        if not (self.tok.kind == "punct" and self.tok.text == "}"):
            while True:
                fname = self.ident("field name")
                if any(fname == f for f, _ in fields):
                    raise self.fail(f"duplicate field {fname!r}", self.toks[self.i - 1])
                self.expect(":")
                fields.append((fname, self.typeref()))
                if not self.accept(",") or (self.tok.kind == "punct" and self.tok.text == "}"):
                    break
        self.expect("}")
        if not fields:
            raise self.fail("records need at least one field", open_tok)
        return Record(tuple(fields))


def parse_schema(text: str) -> Schema:
    """Parse and validate schema source."""
    parser = _Parser(text)
    defs: dict[str, Definition] = {}
    roots: dict[str, Definition] = {}
    for kind, payload, tok in parser.statements():
        if kind == "type":
            name, body = payload
            if name in defs:
                raise SchemaSyntaxError(tok.line, tok.col, f"duplicate type {name!r}")
            defs[name] = body
        else:
            which = GLOBAL_MODEL if kind == "model" else GLOBAL_MSG
            if which in roots:
                raise SchemaSyntaxError(tok.line, tok.col, f"duplicate global {kind}")
            roots[which] = payload
    for which, synth in ((GLOBAL_MODEL, "GlobalModel"), (GLOBAL_MSG, "GlobalMsg")):
        if which not in roots:
            raise MissingRoot(which)
        body = roots[which]
        if not isinstance(body, (Prim, Named, ListOf)):
            if synth in defs:
                raise SchemaError(f"inline global body conflicts with declared type {synth!r}")
            defs[synth] = body
            roots[which] = Named(synth)
    schema = Schema(defs, roots[GLOBAL_MODEL], roots[GLOBAL_MSG])
    _validate(schema)
    return schema


def _refs(item: TypeRef | Definition | None) -> Iterator[str]:
    if isinstance(item, Named):
        yield item.name
    elif isinstance(item, ListOf):
        yield from _refs(item.item)
    elif isinstance(item, Record):
        for _, ref in item.fields:
            yield from _refs(ref)
    elif isinstance(item, Sum):
        for _, ref in item.variants:
            yield from _refs(ref)


def _strong_refs(item: TypeRef | Definition) -> Iterator[str]:
    """Names reached without passing through a sum variant or list."""
    if isinstance(item, Named):
        yield item.name
    elif isinstance(item, Record):
        for _, ref in item.fields:
            yield from _strong_refs(ref)


def _validate(schema: Schema) -> None:
    defs = schema.definitions
    for name in sorted(defs):
        for ref in _refs(defs[name]):
            if ref not in defs:
                raise UnresolvedType(ref)
    for root in (schema.global_model, schema.global_msg):
        for ref in _refs(root):
            if ref not in defs:
                raise UnresolvedType(ref)
    # a cycle among strong edges has no finite encoding
    state: dict[str, int] = {}

    def visit(name: str) -> None:
        state[name] = 1
        for ref in _strong_refs(defs[name]):
            if state.get(ref) == 1:
                raise IllegalRecursion(ref)
            if ref not in state:
                visit(ref)
        state[name] = 2

    for name in sorted(defs):
        if name not in state:
            visit(name)


# -- fingerprint ---------------------------------------------------------------

_KIND = {Record: 1, Sum: 2, ListOf: 3, Prim: 4, Named: 5}


def _str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack(">I", len(raw)) + raw


def _canon(item: Definition) -> bytes:
    kind = bytes([_KIND[type(item)]])
    if isinstance(item, Record):
        return kind + struct.pack(">I", len(item.fields)) + b"".join(
            _str(n) + _canon(r) for n, r in item.fields
        )
    if isinstance(item, Sum):
        out = kind + struct.pack(">I", len(item.variants))
        for n, r in item.variants:
            out += _str(n) + (b"\x00" if r is None else b"\x01" + _canon(r))
        return out
    if isinstance(item, ListOf):
        return kind + _canon(item.item)
    return kind + _str(item.name)


def canonical_form(schema: Schema) -> bytes:
    out = bytearray(b"lgmvu-schema\x01")
    out += struct.pack(">I", len(schema.definitions))
    for name in sorted(schema.definitions):
        out += _str(name) + _canon(schema.definitions[name])
    out += _canon(schema.global_model) + _canon(schema.global_msg)
    return bytes(out)


def fingerprint(schema: Schema) -> bytes:
    """SHA-256 of the canonical form; 32 bytes."""
    return hashlib.sha256(canonical_form(schema)).digest()
