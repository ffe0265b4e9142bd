"""Inlining: beta reduction, single-use lets, and small tuple cleanups."""

from dataclasses import replace

from ..expr import (
    Apply,
    Expr,
    FieldAccess,
    Ident,
    Lambda,
    Let,
    Literal,
    MakeStruct,
    fresh_name,
    substitute,
)
from .support import Budget, count_uses, is_pure, is_total, rewrite_bottom_up, use_context


def _cheap(e: Expr) -> bool:
    return isinstance(e, (Ident, Literal))


def _can_substitute(value: Expr, body: Expr, name: str) -> bool:
    """Is moving value to its single use site invisible?

    Never move evaluation into a lambda (it may run any number of times).
    Moving a possibly-failing expression onto a conditional path could skip
    an error the original program raised, so that needs totality.
    """
    if not is_pure(value):
        return False
    lam, cond = use_context(body, name)
    if lam:
        return False
    return is_total(value) or not cond


def _beta(e: Expr):
    if not isinstance(e, Apply) or not isinstance(e.func, Lambda):
        return None
    lam = e.func
    if len(lam.params) != len(e.args):
        return None
    body = lam.body
    direct: dict[str, Expr] = {}
    pending: list[tuple[str, Expr]] = []
    for p, a in zip(lam.params, e.args):
        uses = count_uses(body, p.name)
        if _cheap(a):
            direct[p.name] = a
        elif uses == 0 and is_total(a):
            continue
        elif uses == 1 and _can_substitute(a, body, p.name):
            direct[p.name] = a
        else:
            tmp = fresh_name(p.name.lstrip("_") or "a")
            pending.append((tmp, a))
            direct[p.name] = Ident(tmp)
    out = substitute(body, direct)
    for tmp, a in reversed(pending):
        out = Let(tmp, a, out)
    return out


def _let(e: Expr):
    if not isinstance(e, Let):
        return None
    uses = count_uses(e.body, e.name)
    if uses == 0 and is_total(e.value):
        return e.body
    if _cheap(e.value):
        return substitute(e.body, {e.name: e.value})
    if uses == 1 and _can_substitute(e.value, e.body, e.name):
        return substitute(e.body, {e.name: e.value})
    return None


def _field_of_struct(e: Expr):
    # {a, b, c}.1 -> b, as long as dropping a and c cannot be observed.
    if not isinstance(e, FieldAccess) or not isinstance(e.base, MakeStruct):
        return None
    items = e.base.items
    if not 0 <= e.ordinal < len(items):
        return None
    if all(is_total(it) for j, it in enumerate(items) if j != e.ordinal):
        return items[e.ordinal]
    return None


_RULES = (_beta, _let, _field_of_struct)


def run(e: Expr, budget: Budget) -> tuple[Expr, int]:
    total = 0
    while True:
        counter = [0]
        e = rewrite_bottom_up(e, budget, _RULES, counter)
        total += counter[0]
        if counter[0] == 0:
            return e, total
