"""Predication: turn branches into selects.

A conditional merge into a commutative-fold builder always has a value that
changes nothing (the fold's identity), so the branch can merge
unconditionally and select between the real value and the identity. Scalar
branches with harmless arms become selects outright. Both shapes feed the
vectorizer, which cannot handle control flow.
"""

from dataclasses import replace

from ..expr import BitSelect, Expr, If, Literal, Merge, map_children
from ..types import BOOL, F32, F64, Builder, Merger, Scalar, identity_value
from .support import Budget, is_total


def _merger_info(builder: Expr):
    ty = builder.ty
    if not isinstance(ty, Builder) or not isinstance(ty.kind, Merger):
        return None
    elem = ty.kind.elem
    if not isinstance(elem, Scalar):
        return None
    # Float min/max folds get no predicated form here: their identities are
    # infinities, and pushing those through every iteration invites the kind
    # of float surprises this pipeline otherwise never introduces.
    if elem.kind in (F32, F64) and ty.kind.op in ("min", "max"):
        return None
    return elem.kind, ty.kind.op


def _conditional_merge(e: Expr):
    if not isinstance(e, If):
        return None
    if not (e.cond.ty == Scalar(BOOL)):
        return None
    t, f = e.on_true, e.on_false
    merged, skipped, flipped = (t, f, False) if isinstance(t, Merge) else (f, t, True)
    if not isinstance(merged, Merge) or merged.builder != skipped:
        return None
    info = _merger_info(merged.builder)
    if info is None:
        return None
    kind, op = info
    if merged.value.ty != Scalar(kind) or not is_total(merged.value):
        return None
    ident = Literal(identity_value(op, kind), kind, ty=Scalar(kind))
    on_true, on_false = (ident, merged.value) if flipped else (merged.value, ident)
    pick = BitSelect(cond=e.cond, on_true=on_true, on_false=on_false, ty=Scalar(kind))
    return replace(merged, value=pick)


def _scalar_branch(e: Expr):
    if not isinstance(e, If):
        return None
    ty = e.on_true.ty
    if not isinstance(ty, Scalar) or e.on_false.ty != ty:
        return None
    if not (is_total(e.on_true) and is_total(e.on_false)):
        return None
    return BitSelect(cond=e.cond, on_true=e.on_true, on_false=e.on_false, ty=ty)


_RULES = (_conditional_merge, _scalar_branch)


def run(e: Expr, budget: Budget) -> tuple[Expr, int]:
    from .support import rewrite_bottom_up

    total = 0
    while True:
        counter = [0]
        e = rewrite_bottom_up(e, budget, _RULES, counter)
        total += counter[0]
        if counter[0] == 0:
            return e, total
