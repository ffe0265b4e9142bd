"""Vectorization: split qualifying loops into a lane-wide main loop plus a
scalar remainder.

A loop qualifies when its body is straight-line scalar arithmetic merging
into scalar mergers or vecbuilders: no branches (predication has already
removed the easy ones), no lookups, sorts, or dictionary work, and no use of
the index parameter. The main loop walks the vector four lanes at a time;
the remainder loop covers the final len mod 4 elements with the original
body. The remainder chains onto the main loop's builders, so both loops
feed the same accumulators and the result is one value, not two.
"""

from ..expr import (
    BinaryOp,
    BitSelect,
    Broadcast,
    CastScalar,
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
    Param,
    UnaryOp,
    free_variables,
    map_children,
)
from ..types import I64, SIMD_WIDTH, Builder, Merger, Scalar, Vec, VecBuilder
from .support import Budget, count_uses


def _slot_kinds(builders: Expr):
    if isinstance(builders, NewBuilder):
        slots = (builders,)
    elif isinstance(builders, MakeStruct) and all(isinstance(x, NewBuilder) for x in builders.items):
        slots = tuple(builders.items)
    else:
        return None
    for s in slots:
        kind = s.kind
        if isinstance(kind, (Merger, VecBuilder)) and isinstance(kind.elem, Scalar):
            continue
        return None
    return slots


def _merge_parts(body: Expr, bp: str, k: int):
    """The body as one merge per builder slot, in slot order."""
    if k == 1:
        if isinstance(body, Merge) and body.builder == Ident(bp):
            return [body]
        return None
    if not isinstance(body, MakeStruct) or len(body.items) != k:
        return None
    parts = []
    for j, part in enumerate(body.items):
        if isinstance(part, Merge) and part.builder == FieldAccess(Ident(bp), j):
            parts.append(part)
        else:
            return None
    return parts


def _plain_scalar(e: Expr, xp: str) -> bool:
    if isinstance(e, Literal):
        return True
    if isinstance(e, Ident):
        return isinstance(e.ty, Scalar)
    if isinstance(e, FieldAccess):
        return isinstance(e.ty, Scalar) and isinstance(e.base, Ident) and e.base.name != xp
    if isinstance(e, CastScalar):
        return _plain_scalar(e.value, xp)
    if isinstance(e, UnaryOp):
        return _plain_scalar(e.operand, xp)
    if isinstance(e, BinaryOp):
        if e.op in ("&&", "||"):
            return False
        return _plain_scalar(e.lhs, xp) and _plain_scalar(e.rhs, xp)
    if isinstance(e, BitSelect):
        return all(_plain_scalar(c, xp) for c in (e.cond, e.on_true, e.on_false))
    return False


def _widen(e: Expr, xp: str) -> Expr:
    """Rewrite a scalar expression to compute all four lanes at once.

    Nodes that mention the element parameter are rebuilt rather than reused:
    the original body lives on in the remainder loop, where the same nodes
    carry scalar types, and one node object must not sit in both.
    """
    if xp not in free_variables(e):
        return Broadcast(e)
    if isinstance(e, Ident):
        return Ident(e.name, span=e.span)  # lane-typed copy of the element param
    return map_children(e, lambda c: _widen(c, xp))


def _vectorize_loop(loop: For):
    it = loop.iters[0]
    if it.simd or it.start is not None or not isinstance(it.data, Ident):
        return None
    if not (isinstance(it.data.ty, Vec) and isinstance(it.data.ty.elem, Scalar)):
        return None
    lam = loop.func
    if not isinstance(lam, Lambda) or len(lam.params) != 3:
        return None
    bp, ip, xp = (p.name for p in lam.params)
    if count_uses(lam.body, ip) > 0:
        return None
    slots = _slot_kinds(loop.builders)
    if slots is None:
        return None
    parts = _merge_parts(lam.body, bp, len(slots))
    if parts is None:
        return None
    for part in parts:
        if not isinstance(part.value.ty, Scalar) or not _plain_scalar(part.value, xp):
            return None

    wide = [Merge(builder=p.builder, value=_widen(p.value, xp)) for p in parts]
    main_body: Expr = wide[0] if len(wide) == 1 else MakeStruct(tuple(wide))
    main_lam = Lambda(params=(Param(bp, None), Param(ip, None), Param(xp, None)), body=main_body)
    main = For(
        iters=(IterSpec(data=Ident(it.data.name), start=None, end=None, stride=None, simd=True),),
        builders=loop.builders,
        func=main_lam,
    )

    name = it.data.name
    width = Literal(SIMD_WIDTH, I64)
    tail_start = BinaryOp("-", Len(Ident(name)), BinaryOp("%", Len(Ident(name)), width))
    tail = IterSpec(
        data=Ident(name),
        start=tail_start,
        end=Len(Ident(name)),
        stride=Literal(1, I64),
        simd=False,
    )
    return For(iters=(tail,), builders=main, func=lam)


def run(e: Expr, budget: Budget) -> tuple[Expr, int]:
    count = [0]

    def go(n: Expr) -> Expr:
        n = map_children(n, go)
        if isinstance(n, For) and len(n.iters) == 1:
            out = _vectorize_loop(n)
            if out is not None:
                budget.spend()
                count[0] += 1
                return out
        return n

    return go(e), count[0]
