"""Parsing for the textual types the runtime boundary speaks.

The client only ever marshals scalars, vectors, and structs, so that is
all this grammar admits:

    type := "bool" | "i32" | "i64" | "f32" | "f64"
          | "vec" "[" type "]"
          | "{" type ("," type)* "}"

Function signatures for UDFs reuse the same vocabulary:

    signature := "(" type ("," type)* ")" "=>" type

Everything is concrete; there are no type variables on this side of the
boundary.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import MarshalError

SCALAR_KINDS = ("bool", "i32", "i64", "f32", "f64")
INT_KINDS = frozenset({"i32", "i64"})
FLOAT_KINDS = frozenset({"f32", "f64"})


@dataclass(frozen=True)
class Scalar:
    kind: str

    def render(self) -> str:
        return self.kind


@dataclass(frozen=True)
class Vec:
    elem: "Type"

    def render(self) -> str:
        return f"vec[{self.elem.render()}]"


@dataclass(frozen=True)
class Struct:
    fields: tuple["Type", ...]

    def render(self) -> str:
        return "{" + ", ".join(f.render() for f in self.fields) + "}"


Type = Scalar | Vec | Struct

_TOKEN_RE = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*|[\[\]{},])")


def _tokenize(text: str) -> list[str]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise MarshalError(f"bad character {text[pos]!r} in type {text!r}")
        out.append(m.group(1))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, expected: str | None = None) -> str:
        tok = self.peek()
        if tok is None:
            raise MarshalError(f"type {self.text!r} ends too early")
        if expected is not None and tok != expected:
            raise MarshalError(f"expected {expected!r} but found {tok!r} in type {self.text!r}")
        self.pos += 1
        return tok

    def parse(self) -> Type:
        tok = self.take()
        if tok in SCALAR_KINDS:
            return Scalar(tok)
        if tok == "vec":
            self.take("[")
            elem = self.parse()
            self.take("]")
            return Vec(elem)
        if tok == "{":
            fields = [self.parse()]
            while self.peek() == ",":
                self.take(",")
                fields.append(self.parse())
            self.take("}")
            return Struct(tuple(fields))
        raise MarshalError(f"type {tok!r} cannot cross the boundary")


def parse_type(text: str) -> Type:
    """Parse a type text into a tree, rejecting anything unmarshalable."""
    p = _Parser(text)
    ty = p.parse()
    if p.peek() is not None:
        raise MarshalError(f"trailing {p.peek()!r} after type in {text!r}")
    return ty


def parse_signature(text: str) -> tuple[tuple[Type, ...], Type]:
    """Split ``(T, ...) => U`` into parameter types and a return type."""
    m = re.fullmatch(r"\s*\((?P<params>[^()]*)\)\s*=>\s*(?P<ret>.+?)\s*", text)
    if m is None:
        raise MarshalError(f"signature {text!r} is not of the form '(T, ...) => U'")
    params_text = m.group("params")
    params = []
    depth = 0
    start = 0
    for i, c in enumerate(params_text):
        if c == "{":
            depth += 1
        elif c == "}":
            depth -= 1
        elif c == "," and depth == 0:
            params.append(params_text[start:i])
            start = i + 1
    params.append(params_text[start:])
    if len(params) == 1 and params[0].strip() == "":
        raise MarshalError(f"signature {text!r} declares no parameters")
    return tuple(parse_type(p) for p in params), parse_type(m.group("ret"))
