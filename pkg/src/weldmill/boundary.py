"""Binary value format for crossing the runtime boundary.

Values entering or leaving the runtime are serialized to a self-contained
little-endian byte stream: scalars at their natural width, structures as
their fields concatenated with no padding, vectors as a signed 64-bit
element count followed by the elements inline. Nested vectors recurse, so
the stream needs no out-of-band length table. Dictionaries and builders
have no boundary form and are rejected.

The same codec backs the foreign call surface, the CLI's --out files, and
the manifest binary inputs, so every consumer agrees on the bytes.
"""

from __future__ import annotations

import struct

from .errors import EncodeError, UnsupportedBoundaryType
from .types import (
    BOOL,
    F32,
    F64,
    I32,
    I32_MAX,
    I32_MIN,
    I64,
    I64_MAX,
    I64_MIN,
    IrType,
    Scalar,
    Struct,
    Vec,
)

_SCALAR_FMT = {I32: "<i", I64: "<q", F32: "<f", F64: "<d"}
_SCALAR_SIZE = {BOOL: 1, I32: 4, I64: 8, F32: 4, F64: 8}
_INT_RANGE = {I32: (I32_MIN, I32_MAX), I64: (I64_MIN, I64_MAX)}

_COUNT = struct.Struct("<q")


def ensure_boundary_type(t: IrType) -> None:
    """Reject types with no boundary representation.

    Only scalars, structures, and vectors (nested arbitrarily) can cross.
    """
    if isinstance(t, Scalar):
        return
    if isinstance(t, Vec):
        ensure_boundary_type(t.elem)
        return
    if isinstance(t, Struct):
        for f in t.fields:
            ensure_boundary_type(f)
        return
    raise UnsupportedBoundaryType(f"type {t} cannot cross the runtime boundary")


def _encode_into(value, t: IrType, out: bytearray) -> None:
    if isinstance(t, Scalar):
        if t.kind == BOOL:
            if not isinstance(value, bool):
                raise EncodeError(f"expected bool, got {type(value).__name__}")
            out.append(1 if value else 0)
            return
        if t.kind in (I32, I64):
            if isinstance(value, bool) or not isinstance(value, int):
                raise EncodeError(f"expected {t.kind}, got {type(value).__name__}")
            lo, hi = _INT_RANGE[t.kind]
            if not lo <= value <= hi:
                raise EncodeError(f"value {value} out of range for {t.kind}")
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise EncodeError(f"expected {t.kind}, got {type(value).__name__}")
            value = float(value)
        out += struct.pack(_SCALAR_FMT[t.kind], value)
        return
    if isinstance(t, Vec):
        if not isinstance(value, (list, tuple)):
            raise EncodeError(f"expected a sequence for {t}, got {type(value).__name__}")
        out += _COUNT.pack(len(value))
        for item in value:
            _encode_into(item, t.elem, out)
        return
    if isinstance(t, Struct):
        if not isinstance(value, (list, tuple)) or len(value) != len(t.fields):
            raise EncodeError(f"expected {len(t.fields)} fields for {t}")
        for item, ft in zip(value, t.fields):
            _encode_into(item, ft, out)
        return
    raise UnsupportedBoundaryType(f"type {t} cannot cross the runtime boundary")


def encode_value(value, t: IrType) -> bytes:
    """Serialize a host value of boundary type t."""
    ensure_boundary_type(t)
    out = bytearray()
    _encode_into(value, t, out)
    return bytes(out)


def _decode_at(data: memoryview, off: int, t: IrType):
    if isinstance(t, Scalar):
        size = _SCALAR_SIZE[t.kind]
        if off + size > len(data):
            raise EncodeError("truncated value stream")
        if t.kind == BOOL:
            b = data[off]
            if b not in (0, 1):
                raise EncodeError(f"invalid bool byte {b:#04x}")
            return bool(b), off + 1
        (v,) = struct.unpack_from(_SCALAR_FMT[t.kind], data, off)
        return v, off + size
    if isinstance(t, Vec):
        if off + 8 > len(data):
            raise EncodeError("truncated value stream")
        (count,) = _COUNT.unpack_from(data, off)
        off += 8
        if count < 0:
            raise EncodeError(f"negative vector length {count}")
        items = []
        for _ in range(count):
            item, off = _decode_at(data, off, t.elem)
            items.append(item)
        return items, off
    if isinstance(t, Struct):
        fields = []
        for ft in t.fields:
            item, off = _decode_at(data, off, ft)
            fields.append(item)
        return tuple(fields), off
    raise UnsupportedBoundaryType(f"type {t} cannot cross the runtime boundary")


def decode_value(data: bytes, t: IrType):
    """Deserialize one value of boundary type t, consuming the whole stream."""
    ensure_boundary_type(t)
    value, off = _decode_at(memoryview(data), 0, t)
    if off != len(data):
        raise EncodeError(f"{len(data) - off} trailing bytes after value")
    return value
