"""Lazy object API: build computation DAGs, evaluate them on demand.

Callers wrap host data in objects, compose computed objects over them with
IR fragments, and nothing runs until evaluate_object. At that point the
whole dependency graph is inlined into one program, pushed through the full
pipeline, and the result comes back in boundary byte form inside a
WeldResult.

Construction-time errors (bad handles, malformed data, undeclared names)
raise immediately. Pipeline errors (a fragment that does not type check, a
run that trips the memory limit) come back inside the WeldResult's error
slot tagged with the stage that failed, so a caller driving many
evaluations can report failures without try/except at every call site.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence, Union

from .boundary import decode_value, encode_value, ensure_boundary_type
from .engine import EngineConfig, EvalStats, Value, evaluate
from .errors import (
    ApiError,
    CycleDetected,
    DoubleFree,
    EvalError,
    EvaluateUnsupportedResultType,
    LinearityError,
    OptimizeError,
    STAGE_ENCODE,
    STAGE_EVAL,
    STAGE_EXPAND,
    STAGE_LINEARITY,
    STAGE_OPTIMIZE,
    STAGE_TYPE,
    StagedError,
    SugarError,
    TypeCheckError,
    UndeclaredDependency,
    UnsupportedBoundaryType,
    UseAfterFree,
)
from .expr import Expr, Ident, Let, free_variables, substitute
from .optim import OptLevel, optimize
from .optim.support import count_uses
from .parser import parse
from .sugar import expand
from .typecheck import check_linearity, infer
from .types import IrType, validate_type

_ids = itertools.count(1)


@dataclass(frozen=True)
class Encoder:
    """Host-value codec for one side of the boundary.

    encode turns a host value of the given type into boundary bytes; decode
    is its inverse. The default pair is the boundary module's codec; callers
    with exotic host containers (array module buffers, say) can supply their
    own as long as decode(encode(x)) round-trips.
    """

    name: str
    encode: Callable[[object, IrType], bytes]
    decode: Callable[[bytes, IrType], object]


DEFAULT_ENCODER = Encoder("boundary", encode_value, decode_value)


@dataclass
class _DataLeaf:
    ty: IrType
    data: object
    encoder: Encoder


@dataclass
class _Computed:
    deps: tuple  # of (name, WeldObject)
    fragment: Expr
    declared_ty: Optional[IrType]


class WeldObject:
    """One node of a computation DAG. Create via the module functions."""

    __slots__ = ("id", "_node", "_freed", "_cached_ty")

    def __init__(self, node):
        self.id = next(_ids)
        self._node = node
        self._freed = False
        self._cached_ty = None

    @property
    def freed(self) -> bool:
        return self._freed

    def _require_live(self) -> None:
        if self._freed:
            raise UseAfterFree(f"object {self.id} was freed")

    def __repr__(self):
        kind = "data" if isinstance(self._node, _DataLeaf) else "computed"
        state = " freed" if self._freed else ""
        return f"<WeldObject {self.id} {kind}{state}>"


def new_data_object(data, ty: IrType, encoder: Encoder | None = None) -> WeldObject:
    """Wrap in-memory host data as a leaf of the given type.

    The data is referenced, not copied: mutations made before evaluation are
    visible to it, and the runtime never writes through the reference.
    Encoding the value is also a validation pass, so shape errors surface
    here rather than deep inside a later evaluate call.
    """
    ensure_boundary_type(ty)
    validate_type(ty)
    enc = encoder or DEFAULT_ENCODER
    enc.encode(data, ty)  # validate shape now, discard the bytes
    return WeldObject(_DataLeaf(ty, data, enc))


_Deps = Union[Sequence[WeldObject], Mapping[str, WeldObject]]


def _named_deps(deps: _Deps) -> tuple:
    if isinstance(deps, Mapping):
        items = tuple(deps.items())
    else:
        items = tuple((f"v{i}", d) for i, d in enumerate(deps))
    seen = set()
    for name, dep in items:
        if not isinstance(dep, WeldObject):
            raise ApiError(f"dependency {name!r} is not a WeldObject")
        dep._require_live()
        if name in seen:
            raise ApiError(f"duplicate dependency name {name!r}")
        seen.add(name)
    return items


def new_computed_object(
    deps: _Deps,
    fragment: Union[Expr, str],
    result_type: IrType | None = None,
) -> WeldObject:
    """Compose a new object from existing ones via an IR fragment.

    deps may be a sequence (the fragment refers to them positionally as
    v0..vk) or a name-to-object mapping for caller-chosen names. Every free
    variable of the fragment must be a declared dependency. The result type
    is optional; when given it is checked against the inferred type at
    evaluation time.
    """
    items = _named_deps(deps)
    if isinstance(fragment, str):
        fragment = parse(fragment)
    declared = {name for name, _ in items}
    stray = sorted(free_variables(fragment) - declared)
    if stray:
        raise UndeclaredDependency(
            f"fragment references undeclared name(s): {', '.join(stray)}"
        )
    return WeldObject(_Computed(items, fragment, result_type))


def _dag_order(root: WeldObject):
    """All reachable objects, dependencies before dependents.

    Also checks liveness of every node and counts how many times each
    object is referenced across fragment occurrences, which decides whether
    its expansion is inlined or bound once with a let.
    """
    order: list[WeldObject] = []
    color: dict[int, str] = {}
    uses: dict[int, int] = {}
    stack: list[tuple[WeldObject, int]] = [(root, 0)]
    while stack:
        obj, i = stack.pop()
        if i == 0:
            state = color.get(obj.id)
            if state == "gray":
                raise CycleDetected(f"object {obj.id} depends on itself")
            if state == "done":
                continue
            obj._require_live()
            color[obj.id] = "gray"
        node = obj._node
        deps = node.deps if isinstance(node, _Computed) else ()
        if i < len(deps):
            stack.append((obj, i + 1))
            name, dep = deps[i]
            uses[dep.id] = uses.get(dep.id, 0) + count_uses(node.fragment, name)
            if color.get(dep.id) != "done":
                stack.append((dep, 0))
        else:
            color[obj.id] = "done"
            order.append(obj)
    return order, uses


def build_program(root: WeldObject) -> tuple[Expr, dict]:
    """Inline the whole DAG into one program plus its parameter bindings.

    Data leaves become free variables v0, v1, ... in first-encounter order
    and come back in the bindings dict as engine values. Computed nodes
    referenced once are inlined in place; nodes referenced more than once
    are bound exactly once with a let, so shared work stays shared.
    """
    root._require_live()
    order, uses = _dag_order(root)

    vnames: dict[int, str] = {}
    params: dict[str, Value] = {}
    for obj in order:
        node = obj._node
        if isinstance(node, _DataLeaf):
            name = f"v{len(vnames)}"
            vnames[obj.id] = name
            params[name] = Value(node.ty, node.encoder.decode(
                node.encoder.encode(node.data, node.ty), node.ty))

    shared: dict[int, str] = {}
    for obj in order:
        if isinstance(obj._node, _Computed) and obj is not root and uses.get(obj.id, 0) >= 2:
            shared[obj.id] = f"t{len(shared)}"

    rhs: dict[int, Expr] = {}

    def use_expr(dep: WeldObject) -> Expr:
        if isinstance(dep._node, _DataLeaf):
            return Ident(vnames[dep.id])
        if dep.id in shared:
            return Ident(shared[dep.id])
        return rhs[dep.id]

    for obj in order:
        node = obj._node
        if not isinstance(node, _Computed):
            continue
        mapping = {
            name: use_expr(dep)
            for name, dep in node.deps
            if count_uses(node.fragment, name) > 0
        }
        rhs[obj.id] = substitute(node.fragment, mapping) if mapping else node.fragment

    body = Ident(vnames[root.id]) if isinstance(root._node, _DataLeaf) else rhs[root.id]
    for obj in reversed(order):
        if obj.id in shared:
            body = Let(shared[obj.id], rhs[obj.id], body)
    return body, params


def get_object_type(o: WeldObject) -> IrType:
    """The object's type, without running anything.

    Leaves answer from their declaration. Computed objects answer from the
    declared result type when one was given, and otherwise from type
    inference over the built program (cached after the first call).
    """
    o._require_live()
    node = o._node
    if isinstance(node, _DataLeaf):
        return node.ty
    if node.declared_ty is not None:
        return node.declared_ty
    if o._cached_ty is None:
        expr, params = build_program(o)
        env = {name: v.ty for name, v in params.items()}
        o._cached_ty = infer(expand(expr), env).ty
    return o._cached_ty


class WeldResult:
    """Outcome of one evaluation: either boundary bytes or a staged error."""

    __slots__ = ("_bytes", "_ty", "_stats", "_error", "_freed")

    def __init__(self, data: bytes | None, ty, stats, error: StagedError | None):
        self._bytes = data
        self._ty = ty
        self._stats = stats
        self._error = error
        self._freed = False

    def _require_live(self) -> None:
        if self._freed:
            raise UseAfterFree("result was freed")

    @property
    def ok(self) -> bool:
        self._require_live()
        return self._error is None

    @property
    def error(self) -> StagedError | None:
        self._require_live()
        return self._error

    @property
    def stats(self) -> EvalStats | None:
        self._require_live()
        return self._stats

    def result_type(self) -> IrType:
        self._require_live()
        if self._error is not None:
            raise ApiError("result holds an error, not a value")
        return self._ty

    def result_bytes(self) -> bytes:
        self._require_live()
        if self._error is not None:
            raise ApiError("result holds an error, not a value")
        return self._bytes

    def value(self):
        """Decode the boundary bytes back to a host value."""
        return decode_value(self.result_bytes(), self._ty)

    def __repr__(self):
        if self._freed:
            return "<WeldResult freed>"
        if self._error is not None:
            return f"<WeldResult error: {self._error}>"
        return f"<WeldResult {self._ty}, {len(self._bytes)} bytes>"


def evaluate_object(
    o: WeldObject,
    config: EngineConfig | None = None,
    level: OptLevel | None = None,
) -> WeldResult:
    """Run the object's whole DAG through the pipeline.

    Structural misuse (freed handles, cycles, host data that does not match
    its declared type) raises. Everything downstream of a well-formed build
    lands in the returned WeldResult, error slot included.
    """
    expr, params = build_program(o)
    env = {name: v.ty for name, v in params.items()}

    def failed(stage, err):
        return WeldResult(None, None, None, StagedError(stage, err))

    try:
        expanded = expand(expr)
    except SugarError as err:
        return failed(STAGE_EXPAND, err)
    try:
        typed = infer(expanded, env)
        declared = getattr(o._node, "declared_ty", None)
        if declared is not None and typed.ty != declared:
            raise TypeCheckError(
                f"declared result type {declared} but program has type {typed.ty}"
            )
    except TypeCheckError as err:
        return failed(STAGE_TYPE, err)
    try:
        check_linearity(typed)
    except LinearityError as err:
        return failed(STAGE_LINEARITY, err)
    try:
        optimized, _reports = optimize(typed, level)
    except OptimizeError as err:
        return failed(STAGE_OPTIMIZE, err)
    try:
        value, stats = evaluate(optimized, params, config)
    except EvalError as err:
        return failed(STAGE_EVAL, err)
    try:
        ensure_boundary_type(value.ty)
    except UnsupportedBoundaryType as err:
        wrapped = EvaluateUnsupportedResultType(
            f"result type {value.ty} has no boundary form; wrap it in tovec"
        )
        wrapped.__cause__ = err
        return WeldResult(None, None, stats, StagedError(STAGE_ENCODE, wrapped))
    data = encode_value(value.data, value.ty)
    return WeldResult(data, value.ty, stats, None)


def free_object(o: WeldObject) -> None:
    """Release this node. Dependencies and dependents are untouched."""
    if o._freed:
        raise DoubleFree(f"object {o.id} was already freed")
    o._freed = True
    o._node = None
    o._cached_ty = None


def free_result(r: WeldResult) -> None:
    if r._freed:
        raise DoubleFree("result was already freed")
    r._freed = True
    r._bytes = None
    r._stats = None
    r._error = None
