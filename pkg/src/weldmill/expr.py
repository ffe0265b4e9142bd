"""Expression tree for the loop-and-builder IR.

Nodes are frozen dataclasses; rewrites build new trees.  Source spans and
inferred types ride along on every node but are excluded from structural
equality, so two parses of the same text compare equal regardless of layout.
"""
from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field, fields, replace

from .errors import WellFormednessError
from .types import Builder, BuilderKind, IrType, VecBuilder, VecMerger

_counter = itertools.count()
_counter_lock = threading.Lock()


def fresh_name(stem: str = "t") -> str:
    with _counter_lock:
        return f"_{stem}{next(_counter)}"


@dataclass(frozen=True)
class Expr:
    span: tuple[int, int] | None = field(default=None, compare=False, repr=False, kw_only=True)
    ty: IrType | None = field(default=None, compare=False, repr=False, kw_only=True)

    def with_ty(self, ty: IrType) -> "Expr":
        return replace(self, ty=ty)


@dataclass(frozen=True)
class Param:
    name: str
    ty_ann: IrType | None = field(default=None, compare=False)


@dataclass(frozen=True)
class IterSpec:
    """One iterated vector in a loop, with an optional start/end/stride window.

    The three bounds appear together or not at all.  ``simd`` marks a lane-wide
    iteration: elements are delivered as short vectors of the module width.
    """

    data: Expr
    start: Expr | None = None
    end: Expr | None = None
    stride: Expr | None = None
    simd: bool = False


@dataclass(frozen=True)
class Literal(Expr):
    value: object = None
    kind: str | None = None  # None: numeric literal still open to inference


@dataclass(frozen=True)
class Ident(Expr):
    name: str = ""


@dataclass(frozen=True)
class Let(Expr):
    name: str = ""
    value: Expr = None
    body: Expr = None


@dataclass(frozen=True)
class Lambda(Expr):
    params: tuple[Param, ...] = ()
    body: Expr = None


@dataclass(frozen=True)
class BinaryOp(Expr):
    op: str = ""
    lhs: Expr = None
    rhs: Expr = None


@dataclass(frozen=True)
class UnaryOp(Expr):
    op: str = ""  # "-" or "!"
    operand: Expr = None


@dataclass(frozen=True)
class If(Expr):
    cond: Expr = None
    on_true: Expr = None
    on_false: Expr = None


@dataclass(frozen=True)
class BitSelect(Expr):
    """Branch-free select: evaluates both arms, keeps one."""

    cond: Expr = None
    on_true: Expr = None
    on_false: Expr = None


@dataclass(frozen=True)
class Iterate(Expr):
    init: Expr = None
    update: Expr = None  # (state) => {state', continue?}


@dataclass(frozen=True)
class Lookup(Expr):
    coll: Expr = None
    index: Expr = None


@dataclass(frozen=True)
class FieldAccess(Expr):
    base: Expr = None
    ordinal: int = 0


@dataclass(frozen=True)
class Len(Expr):
    coll: Expr = None


@dataclass(frozen=True)
class Sort(Expr):
    vec: Expr = None
    key: Expr = None


@dataclass(frozen=True)
class ToVec(Expr):
    mapping: Expr = None


@dataclass(frozen=True)
class MakeStruct(Expr):
    items: tuple[Expr, ...] = ()


@dataclass(frozen=True)
class MakeVector(Expr):
    items: tuple[Expr, ...] = ()


@dataclass(frozen=True)
class NewBuilder(Expr):
    kind: BuilderKind = None
    arg: Expr | None = None  # vecbuilder: size hint; vecmerger: initial vector


@dataclass(frozen=True)
class Merge(Expr):
    builder: Expr = None
    value: Expr = None


@dataclass(frozen=True)
class Result(Expr):
    builder: Expr = None


@dataclass(frozen=True)
class For(Expr):
    iters: tuple[IterSpec, ...] = ()
    builders: Expr = None
    func: Expr = None


@dataclass(frozen=True)
class Apply(Expr):
    func: Expr = None
    args: tuple[Expr, ...] = ()


@dataclass(frozen=True)
class ExternCall(Expr):
    name: str = ""
    args: tuple[Expr, ...] = ()


@dataclass(frozen=True)
class Broadcast(Expr):
    value: Expr = None


@dataclass(frozen=True)
class CastScalar(Expr):
    value: Expr = None
    kind: str = ""


@dataclass(frozen=True)
class SugarOp(Expr):
    """A surface macro (map/filter/reduce/flatmap/zip/groupby) awaiting expansion."""

    name: str = ""
    args: tuple[Expr, ...] = ()


SUGAR_ARITY = {"map": 2, "filter": 2, "flatmap": 2, "reduce": 3, "groupby": 3}
# zip is variadic (>= 2), checked separately.


def children(e: Expr) -> list[Expr]:
    """All direct child expressions, including those inside iter specs."""
    out: list[Expr] = []
    if isinstance(e, For):
        for it in e.iters:
            out.append(it.data)
            for b in (it.start, it.end, it.stride):
                if b is not None:
                    out.append(b)
        out.append(e.builders)
        out.append(e.func)
        return out
    if isinstance(e, NewBuilder):
        return [e.arg] if e.arg is not None else []
    for f in fields(e):
        v = getattr(e, f.name)
        if isinstance(v, Expr):
            out.append(v)
        elif isinstance(v, tuple):
            out.extend(x for x in v if isinstance(x, Expr))
    return out


def map_children(e: Expr, fn) -> Expr:
    """Rebuild e with fn applied to each direct child expression."""
    if isinstance(e, Let):
        return replace(e, value=fn(e.value), body=fn(e.body))
    if isinstance(e, Lambda):
        return replace(e, body=fn(e.body))
    if isinstance(e, BinaryOp):
        return replace(e, lhs=fn(e.lhs), rhs=fn(e.rhs))
    if isinstance(e, UnaryOp):
        return replace(e, operand=fn(e.operand))
    if isinstance(e, (If, BitSelect)):
        return replace(e, cond=fn(e.cond), on_true=fn(e.on_true), on_false=fn(e.on_false))
    if isinstance(e, Iterate):
        return replace(e, init=fn(e.init), update=fn(e.update))
    if isinstance(e, Lookup):
        return replace(e, coll=fn(e.coll), index=fn(e.index))
    if isinstance(e, FieldAccess):
        return replace(e, base=fn(e.base))
    if isinstance(e, Len):
        return replace(e, coll=fn(e.coll))
    if isinstance(e, Sort):
        return replace(e, vec=fn(e.vec), key=fn(e.key))
    if isinstance(e, ToVec):
        return replace(e, mapping=fn(e.mapping))
    if isinstance(e, MakeStruct):
        return replace(e, items=tuple(fn(x) for x in e.items))
    if isinstance(e, MakeVector):
        return replace(e, items=tuple(fn(x) for x in e.items))
    if isinstance(e, NewBuilder):
        return replace(e, arg=fn(e.arg) if e.arg is not None else None)
    if isinstance(e, Merge):
        return replace(e, builder=fn(e.builder), value=fn(e.value))
    if isinstance(e, Result):
        return replace(e, builder=fn(e.builder))
    if isinstance(e, For):
        its = tuple(
            IterSpec(
                data=fn(it.data),
                start=fn(it.start) if it.start is not None else None,
                end=fn(it.end) if it.end is not None else None,
                stride=fn(it.stride) if it.stride is not None else None,
                simd=it.simd,
            )
            for it in e.iters
        )
        return replace(e, iters=its, builders=fn(e.builders), func=fn(e.func))
    if isinstance(e, Apply):
        return replace(e, func=fn(e.func), args=tuple(fn(a) for a in e.args))
    if isinstance(e, ExternCall):
        return replace(e, args=tuple(fn(a) for a in e.args))
    if isinstance(e, Broadcast):
        return replace(e, value=fn(e.value))
    if isinstance(e, CastScalar):
        return replace(e, value=fn(e.value))
    if isinstance(e, SugarOp):
        return replace(e, args=tuple(fn(a) for a in e.args))
    if isinstance(e, (Literal, Ident)):
        return e
    raise WellFormednessError(f"unknown node {type(e).__name__}")


def walk(e: Expr):
    """Yield every node in the tree, preorder."""
    stack = [e]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(children(n)))


def count_nodes(e: Expr) -> int:
    return sum(1 for _ in walk(e))


def bound_names(e: Expr) -> list[str]:
    if isinstance(e, Let):
        return [e.name]
    if isinstance(e, Lambda):
        return [p.name for p in e.params]
    return []


def free_variables(e: Expr) -> set[str]:
    if isinstance(e, Ident):
        return {e.name}
    if isinstance(e, Let):
        return free_variables(e.value) | (free_variables(e.body) - {e.name})
    if isinstance(e, Lambda):
        return free_variables(e.body) - {p.name for p in e.params}
    out: set[str] = set()
    for c in children(e):
        out |= free_variables(c)
    return out


def substitute(e: Expr, bindings: dict[str, Expr]) -> Expr:
    """Simultaneous capture-avoiding substitution of free identifiers."""
    if not bindings:
        return e

    def must_rename(binder: str, body: Expr, binds: dict[str, Expr]) -> bool:
        # Renaming is needed when something will be inserted under this binder
        # and that something mentions the binder's name free.
        fv = None
        for k, r in binds.items():
            if binder in free_variables(r):
                if fv is None:
                    fv = free_variables(body)
                if k in fv:
                    return True
        return False

    def go(node: Expr, binds: dict[str, Expr]) -> Expr:
        if not binds:
            return node
        if isinstance(node, Ident):
            return binds.get(node.name, node)
        if isinstance(node, Let):
            value = go(node.value, binds)
            inner = {k: v for k, v in binds.items() if k != node.name}
            name = node.name
            body = node.body
            if inner and must_rename(name, body, inner):
                new = fresh_name(name.lstrip("_") or "x")
                body = go(body, {name: Ident(name=new)})
                name = new
            return replace(node, name=name, value=value, body=go(body, inner))
        if isinstance(node, Lambda):
            names = {p.name for p in node.params}
            inner = {k: v for k, v in binds.items() if k not in names}
            if not inner:
                return node
            params = list(node.params)
            body = node.body
            for i, p in enumerate(params):
                if must_rename(p.name, body, inner):
                    new = fresh_name(p.name.lstrip("_") or "x")
                    body = go(body, {p.name: Ident(name=new)})
                    params[i] = Param(new, p.ty_ann)
            return replace(node, params=tuple(params), body=go(body, inner))
        return map_children(node, lambda c: go(c, binds))

    return go(e, dict(bindings))


def alpha_normalize(e: Expr) -> Expr:
    """Rename every binder to a position-deterministic name.

    Two trees that differ only in bound names normalize to equal trees, which
    is how "structurally equal modulo names" is checked.
    """
    counter = itertools.count()

    def go(node: Expr, env: dict[str, str]) -> Expr:
        if isinstance(node, Ident):
            return replace(node, name=env.get(node.name, node.name))
        if isinstance(node, Let):
            value = go(node.value, env)
            new = f"_n{next(counter)}"
            body = go(node.body, {**env, node.name: new})
            return replace(node, name=new, value=value, body=body)
        if isinstance(node, Lambda):
            inner = dict(env)
            params = []
            for p in node.params:
                new = f"_n{next(counter)}"
                inner[p.name] = new
                params.append(Param(new, p.ty_ann))
            return replace(node, params=tuple(params), body=go(node.body, inner))
        return map_children(node, lambda c: go(c, env))

    return go(e, {})


def well_formed(e: Expr) -> None:
    """Structural sanity checks that do not need types."""
    if isinstance(e, For):
        for it in e.iters:
            bounds = (it.start, it.end, it.stride)
            present = [b is not None for b in bounds]
            if any(present) and not all(present):
                raise WellFormednessError("iter bounds come as all of start/end/stride or none", e.span)
            if it.simd and any(present):
                raise WellFormednessError("lane-wide iteration takes no explicit bounds", e.span)
        if not e.iters:
            raise WellFormednessError("for needs at least one iterated vector", e.span)
        if isinstance(e.func, Lambda) and len(e.func.params) != 3:
            raise WellFormednessError("loop functions take exactly (builder, index, element)", e.span)
    if isinstance(e, Lambda):
        names = [p.name for p in e.params]
        if len(set(names)) != len(names):
            raise WellFormednessError("duplicate parameter names", e.span)
    if isinstance(e, MakeStruct) and not e.items:
        raise WellFormednessError("structs need at least one field", e.span)
    if isinstance(e, MakeVector) and not e.items:
        raise WellFormednessError("vector literals need at least one element", e.span)
    if isinstance(e, SugarOp):
        if e.name == "zip":
            if len(e.args) < 2:
                raise WellFormednessError("zip needs at least two vectors", e.span)
        elif len(e.args) != SUGAR_ARITY[e.name]:
            raise WellFormednessError(f"{e.name} takes {SUGAR_ARITY[e.name]} arguments", e.span)
    if isinstance(e, NewBuilder):
        if e.arg is not None and not isinstance(e.kind, (VecBuilder, VecMerger)):
            raise WellFormednessError("only vecbuilder/vecmerger constructors take an argument", e.span)
        if isinstance(e.kind, VecMerger) and e.arg is None:
            raise WellFormednessError("vecmerger needs an initial vector argument", e.span)
    for c in children(e):
        well_formed(c)
