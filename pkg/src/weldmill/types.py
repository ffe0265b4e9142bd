"""The type lattice: scalars, short vectors, containers, builders, functions.

Types are immutable and compared structurally.  Builder descriptors may carry
``None`` in element positions while a tree is still being inferred; a fully
typed tree never does.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import WellFormednessError

# Module-wide lane width for the short-vector (Simd) form.
SIMD_WIDTH = 4

BOOL = "bool"
I32 = "i32"
I64 = "i64"
F32 = "f32"
F64 = "f64"

SCALAR_KINDS = (BOOL, I32, I64, F32, F64)
INT_KINDS = (I32, I64)
FLOAT_KINDS = (F32, F64)
NUMERIC_KINDS = INT_KINDS + FLOAT_KINDS
ORDERED_KINDS = NUMERIC_KINDS  # bool has equality but no ordering here

SCALAR_SIZES = {BOOL: 1, I32: 4, I64: 8, F32: 4, F64: 8}

MERGE_OPS = ("+", "*", "min", "max")

ARITH_OPS = ("+", "-", "*", "/", "%")
CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")
LOGIC_OPS = ("&&", "||")
BITWISE_OPS = ("&", "|")
MINMAX_OPS = ("min", "max")

I32_MIN, I32_MAX = -(2**31), 2**31 - 1
I64_MIN, I64_MAX = -(2**63), 2**63 - 1


class IrType:
    """Base class; concrete types are the dataclasses below."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Scalar(IrType):
    kind: str

    def __str__(self):
        return self.kind


@dataclass(frozen=True, slots=True)
class Simd(IrType):
    kind: str
    width: int = SIMD_WIDTH

    def __str__(self):
        return f"simd[{self.kind}]"


@dataclass(frozen=True, slots=True)
class Vec(IrType):
    elem: IrType

    def __str__(self):
        return f"vec[{self.elem}]"


@dataclass(frozen=True, slots=True)
class Struct(IrType):
    fields: tuple[IrType, ...]

    def __str__(self):
        return "{" + ", ".join(str(f) for f in self.fields) + "}"


@dataclass(frozen=True, slots=True)
class Dict(IrType):
    key: IrType
    value: IrType

    def __str__(self):
        return f"dict[{self.key}, {self.value}]"


class BuilderKind:
    __slots__ = ()


def _opt(t):
    return "" if t is None else str(t)


@dataclass(frozen=True, slots=True)
class VecBuilder(BuilderKind):
    elem: IrType | None = None

    def __str__(self):
        return f"vecbuilder[{self.elem}]" if self.elem is not None else "vecbuilder"


@dataclass(frozen=True, slots=True)
class Merger(BuilderKind):
    elem: IrType | None
    op: str

    def __str__(self):
        if self.elem is None:
            return f"merger[{self.op}]"
        return f"merger[{self.elem}, {self.op}]"


@dataclass(frozen=True, slots=True)
class DictMerger(BuilderKind):
    key: IrType | None
    value: IrType | None
    op: str

    def __str__(self):
        if self.key is None or self.value is None:
            return f"dictmerger[{self.op}]"
        return f"dictmerger[{self.key}, {self.value}, {self.op}]"


@dataclass(frozen=True, slots=True)
class VecMerger(BuilderKind):
    elem: IrType | None
    op: str

    def __str__(self):
        if self.elem is None:
            return f"vecmerger[{self.op}]"
        return f"vecmerger[{self.elem}, {self.op}]"


@dataclass(frozen=True, slots=True)
class GroupBuilder(BuilderKind):
    key: IrType | None = None
    value: IrType | None = None

    def __str__(self):
        if self.key is None or self.value is None:
            return "groupbuilder"
        return f"groupbuilder[{self.key}, {self.value}]"


@dataclass(frozen=True, slots=True)
class Builder(IrType):
    kind: BuilderKind

    def __str__(self):
        return str(self.kind)


@dataclass(frozen=True, slots=True)
class Function(IrType):
    params: tuple[IrType, ...]
    ret: IrType

    def __str__(self):
        return "(" + ", ".join(str(p) for p in self.params) + f") => {self.ret}"


def type_equals(a: IrType, b: IrType) -> bool:
    return a == b


def is_scalar(t: IrType, kinds=SCALAR_KINDS) -> bool:
    return isinstance(t, Scalar) and t.kind in kinds


def f32_round(v: float) -> float:
    """Round a Python float to the nearest value representable in 32 bits."""
    try:
        return struct.unpack("<f", struct.pack("<f", v))[0]
    except OverflowError:
        return float("inf") if v > 0 else float("-inf")


def identity_value(op: str, kind: str):
    """The value a merger of `op` starts from, chosen so merging it is a no-op."""
    if kind in INT_KINDS:
        lo, hi = (I32_MIN, I32_MAX) if kind == I32 else (I64_MIN, I64_MAX)
        return {"+": 0, "*": 1, "min": hi, "max": lo}[op]
    if kind in FLOAT_KINDS:
        return {"+": 0.0, "*": 1.0, "min": float("inf"), "max": float("-inf")}[op]
    raise WellFormednessError(f"merge op {op!r} has no identity over {kind}")


def op_admissible(op: str, t: IrType) -> bool:
    """Whether a merger with this op accepts elements of type t.

    Struct elements fold field-by-field, so every field must admit the op.
    """
    if isinstance(t, Scalar):
        return t.kind in NUMERIC_KINDS
    if isinstance(t, Struct):
        return all(op_admissible(op, f) for f in t.fields)
    return False


def merge_input_type(kind: BuilderKind) -> IrType:
    """What a single merge into this builder consumes."""
    if isinstance(kind, VecBuilder):
        return kind.elem
    if isinstance(kind, Merger):
        return kind.elem
    if isinstance(kind, DictMerger):
        return Struct((kind.key, kind.value))
    if isinstance(kind, VecMerger):
        return Struct((Scalar(I64), kind.elem))
    if isinstance(kind, GroupBuilder):
        return Struct((kind.key, kind.value))
    raise WellFormednessError(f"unknown builder kind {kind!r}")


def builder_result_type(kind: BuilderKind) -> IrType:
    if isinstance(kind, VecBuilder):
        return Vec(kind.elem)
    if isinstance(kind, Merger):
        return kind.elem
    if isinstance(kind, DictMerger):
        return Dict(kind.key, kind.value)
    if isinstance(kind, VecMerger):
        return Vec(kind.elem)
    if isinstance(kind, GroupBuilder):
        return Dict(kind.key, Vec(kind.value))
    raise WellFormednessError(f"unknown builder kind {kind!r}")


def is_hashable_key(t: IrType) -> bool:
    """Dictionary keys: scalars or structures of scalars."""
    if isinstance(t, Scalar):
        return True
    if isinstance(t, Struct):
        return all(isinstance(f, Scalar) for f in t.fields)
    return False


def contains_builder(t: IrType) -> bool:
    if isinstance(t, Builder):
        return True
    if isinstance(t, Vec):
        return contains_builder(t.elem)
    if isinstance(t, Struct):
        return any(contains_builder(f) for f in t.fields)
    if isinstance(t, Dict):
        return contains_builder(t.key) or contains_builder(t.value)
    if isinstance(t, Function):
        return any(contains_builder(p) for p in t.params) or contains_builder(t.ret)
    return False


def _builder_kind_wf(kind: BuilderKind) -> None:
    if isinstance(kind, VecBuilder):
        validate_type(kind.elem, allow_builders=False)
        return
    if isinstance(kind, (Merger, VecMerger)):
        if kind.op not in MERGE_OPS:
            raise WellFormednessError(f"bad merge op {kind.op!r}")
        validate_type(kind.elem, allow_builders=False)
        if not op_admissible(kind.op, kind.elem):
            raise WellFormednessError(f"element type {kind.elem} does not admit op {kind.op!r}")
        if kind.op in MINMAX_OPS and not isinstance(kind.elem, Scalar):
            # min/max fold fields independently, which is well-defined, but the
            # ordered-scalar requirement keeps the boundary story simple.
            if not op_admissible(kind.op, kind.elem):
                raise WellFormednessError("min/max merger needs numeric fields")
        return
    if isinstance(kind, DictMerger):
        if kind.op not in MERGE_OPS:
            raise WellFormednessError(f"bad merge op {kind.op!r}")
        validate_type(kind.key, allow_builders=False)
        validate_type(kind.value, allow_builders=False)
        if not is_hashable_key(kind.key):
            raise WellFormednessError(f"dict key type {kind.key} is not hashable")
        if not op_admissible(kind.op, kind.value):
            raise WellFormednessError(f"value type {kind.value} does not admit op {kind.op!r}")
        return
    if isinstance(kind, GroupBuilder):
        validate_type(kind.key, allow_builders=False)
        validate_type(kind.value, allow_builders=False)
        if not is_hashable_key(kind.key):
            raise WellFormednessError(f"dict key type {kind.key} is not hashable")
        return
    raise WellFormednessError(f"unknown builder kind {kind!r}")


def validate_type(t: IrType, allow_builders: bool = True) -> None:
    """Reject ill-formed types.

    Builders may appear at top level or inside structures (so a loop can carry
    several at once) but never inside vectors or dictionaries; function types
    never nest inside data.  Simd lanes are non-bool scalars of the module
    width.
    """
    if isinstance(t, Scalar):
        if t.kind not in SCALAR_KINDS:
            raise WellFormednessError(f"unknown scalar kind {t.kind!r}")
        return
    if isinstance(t, Simd):
        if t.kind == BOOL or t.kind not in SCALAR_KINDS:
            raise WellFormednessError(f"simd lanes must be non-bool scalars, got {t.kind!r}")
        if t.width != SIMD_WIDTH:
            raise WellFormednessError(f"simd width must be {SIMD_WIDTH}")
        return
    if isinstance(t, Vec):
        if isinstance(t.elem, (Builder, Function, Simd)):
            raise WellFormednessError(f"vector elements cannot be {t.elem}")
        validate_type(t.elem, allow_builders=False)
        return
    if isinstance(t, Struct):
        if not t.fields:
            raise WellFormednessError("structs need at least one field")
        for f in t.fields:
            if isinstance(f, Function):
                raise WellFormednessError("structs cannot hold functions")
            if isinstance(f, Builder) and not allow_builders:
                raise WellFormednessError("builders cannot nest inside data containers")
            validate_type(f, allow_builders=allow_builders)
        return
    if isinstance(t, Dict):
        validate_type(t.key, allow_builders=False)
        validate_type(t.value, allow_builders=False)
        if not is_hashable_key(t.key):
            raise WellFormednessError(f"dict key type {t.key} is not hashable")
        if contains_builder(t.value) or isinstance(t.value, Function):
            raise WellFormednessError("dict values must be plain data")
        return
    if isinstance(t, Builder):
        if not allow_builders:
            raise WellFormednessError("builders cannot nest inside data containers")
        if None in _kind_holes(t.kind):
            raise WellFormednessError("builder type with unresolved element types")
        _builder_kind_wf(t.kind)
        return
    if isinstance(t, Function):
        for p in t.params:
            validate_type(p, allow_builders=True)
        validate_type(t.ret, allow_builders=True)
        return
    raise WellFormednessError(f"not a type: {t!r}")


def _kind_holes(kind: BuilderKind):
    if isinstance(kind, (VecBuilder, Merger, VecMerger)):
        return (kind.elem,)
    if isinstance(kind, (DictMerger, GroupBuilder)):
        return (kind.key, kind.value)
    return ()


def byte_size(t: IrType, value=None) -> int:
    """Approximate in-memory footprint used by the engine's accounting."""
    if isinstance(t, Scalar):
        return SCALAR_SIZES[t.kind]
    if isinstance(t, Struct):
        return sum(byte_size(f) for f in t.fields)
    if isinstance(t, Vec):
        if value is None:
            return 8
        return 8 + sum(byte_size(t.elem, v) for v in value) if isinstance(t.elem, Vec) \
            else 8 + len(value) * byte_size(t.elem)
    if isinstance(t, Dict):
        return 8
    return 8
