"""Size analysis: preallocation hints for vector builders.

A loop that appends to a vecbuilder exactly once per iteration produces a
vector whose length equals the iteration count, which is known up front:
len(v) for a plain loop, ceil((end - start) / stride) for a bounded one.
The hint becomes the builder's constructor argument; the engine then
allocates once and its reallocation counter stays at zero.
"""

from dataclasses import replace

from ..expr import (
    BinaryOp,
    Expr,
    FieldAccess,
    For,
    Ident,
    IterSpec,
    Lambda,
    Len,
    Literal,
    MakeStruct,
    Merge,
    NewBuilder,
    map_children,
)
from ..printer import print_expr
from ..types import I64, VecBuilder
from .support import Budget, is_pure


def _count_expr(it: IterSpec) -> Expr | None:
    if it.start is None:
        return Len(Ident(it.data.name))
    if not (is_pure(it.start) and is_pure(it.end) and is_pure(it.stride)):
        return None
    one = Literal(1, I64)
    span = BinaryOp("-", it.end, it.start)
    bump = BinaryOp("-", it.stride, one)
    return BinaryOp("/", BinaryOp("+", span, bump), it.stride)


def _wants_hint(slot: Expr) -> bool:
    return isinstance(slot, NewBuilder) and isinstance(slot.kind, VecBuilder) and slot.arg is None


def _annotate(loop: For) -> tuple[For, list[Expr]] | None:
    it = loop.iters[0]
    if it.simd or not isinstance(it.data, Ident):
        return None
    lam = loop.func
    if not isinstance(lam, Lambda) or len(lam.params) != 3:
        return None
    hint = _count_expr(it)
    if hint is None:
        return None
    bp = lam.params[0].name
    bs = loop.builders

    if _wants_hint(bs):
        body = lam.body
        if isinstance(body, Merge) and isinstance(body.builder, Ident) and body.builder.name == bp:
            return replace(loop, builders=replace(bs, arg=hint)), [hint]
        return None

    if isinstance(bs, MakeStruct) and isinstance(lam.body, MakeStruct) and len(bs.items) == len(lam.body.items):
        slots = list(bs.items)
        hints: list[Expr] = []
        for j, (slot, part) in enumerate(zip(bs.items, lam.body.items)):
            if (
                _wants_hint(slot)
                and isinstance(part, Merge)
                and isinstance(part.builder, FieldAccess)
                and part.builder.ordinal == j
                and isinstance(part.builder.base, Ident)
                and part.builder.base.name == bp
            ):
                slots[j] = replace(slot, arg=hint)
                hints.append(hint)
        if hints:
            return replace(loop, builders=replace(bs, items=tuple(slots))), hints
    return None


def run(e: Expr, budget: Budget) -> tuple[Expr, int, list[str]]:
    sizes: list[str] = []
    rewrites = [0]

    def go(n: Expr) -> Expr:
        n = map_children(n, go)
        if isinstance(n, For) and len(n.iters) == 1:
            out = _annotate(n)
            if out is not None:
                budget.spend()
                rewrites[0] += 1
                n, hints = out
                sizes.extend(print_expr(h) for h in hints)
        return n

    return go(e), rewrites[0], sizes
