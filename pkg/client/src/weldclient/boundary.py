"""Encoding and decoding of values in the runtime's wire format.

Everything is little-endian. Scalars are fixed width (bool is a single
0/1 byte, i32/i64 are signed, f32/f64 are IEEE). A vector is a signed
64-bit element count followed by its elements inline; a struct is the
packed concatenation of its fields. The format has no alignment and no
framing beyond the counts, so decoding must consume the byte string
exactly.
"""

from __future__ import annotations

import struct
from typing import Any

from .errors import MarshalError
from .typetext import Scalar, Struct, Type, Vec, parse_type

_SCALAR_FMT = {"bool": "<B", "i32": "<i", "i64": "<q", "f32": "<f", "f64": "<d"}
_I32_RANGE = (-(1 << 31), (1 << 31) - 1)
_I64_RANGE = (-(1 << 63), (1 << 63) - 1)


def _pack_scalar(value: Any, kind: str) -> bytes:
    if kind == "bool":
        if not isinstance(value, bool):
            raise MarshalError(f"expected bool, got {type(value).__name__}")
        return b"\x01" if value else b"\x00"
    if kind in ("i32", "i64"):
        if not isinstance(value, int) or isinstance(value, bool):
            raise MarshalError(f"expected int for {kind}, got {type(value).__name__}")
        lo, hi = _I32_RANGE if kind == "i32" else _I64_RANGE
        if not lo <= value <= hi:
            raise MarshalError(f"{value} does not fit in {kind}")
        return struct.pack(_SCALAR_FMT[kind], value)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise MarshalError(f"expected number for {kind}, got {type(value).__name__}")
    return struct.pack(_SCALAR_FMT[kind], float(value))


def encode(value: Any, ty: Type | str) -> bytes:
    """Encode a host value against a type (tree or text)."""
    if isinstance(ty, str):
        ty = parse_type(ty)
    if isinstance(ty, Scalar):
        return _pack_scalar(value, ty.kind)
    if isinstance(ty, Vec):
        if not isinstance(value, (list, tuple)):
            raise MarshalError(f"expected a sequence for {ty.render()}, got {type(value).__name__}")
        parts = [struct.pack("<q", len(value))]
        parts.extend(encode(v, ty.elem) for v in value)
        return b"".join(parts)
    if not isinstance(value, tuple) or len(value) != len(ty.fields):
        raise MarshalError(f"expected a {len(ty.fields)}-tuple for {ty.render()}")
    return b"".join(encode(v, f) for v, f in zip(value, ty.fields))


def _decode_at(data: bytes, pos: int, ty: Type) -> tuple[Any, int]:
    if isinstance(ty, Scalar):
        fmt = _SCALAR_FMT[ty.kind]
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise MarshalError(f"byte string too short for {ty.kind}")
        raw = struct.unpack_from(fmt, data, pos)[0]
        if ty.kind == "bool":
            if raw not in (0, 1):
                raise MarshalError(f"bool byte must be 0 or 1, got {raw}")
            return bool(raw), pos + size
        return raw, pos + size
    if isinstance(ty, Vec):
        if pos + 8 > len(data):
            raise MarshalError("byte string too short for a vector count")
        count = struct.unpack_from("<q", data, pos)[0]
        if count < 0:
            raise MarshalError(f"vector count is negative ({count})")
        pos += 8
        items = []
        for _ in range(count):
            item, pos = _decode_at(data, pos, ty.elem)
            items.append(item)
        return items, pos
    fields = []
    for f in ty.fields:
        v, pos = _decode_at(data, pos, f)
        fields.append(v)
    return tuple(fields), pos


def decode(data: bytes, ty: Type | str) -> Any:
    """Decode a byte string against a type, requiring exact consumption."""
    if isinstance(ty, str):
        ty = parse_type(ty)
    value, pos = _decode_at(data, 0, ty)
    if pos != len(data):
        raise MarshalError(f"{len(data) - pos} unconsumed bytes after {ty.render()}")
    return value
