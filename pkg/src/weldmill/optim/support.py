"""Shared analyses for the rewrite passes.

Everything here is syntactic and conservative: when in doubt a predicate
answers False and the pass that asked simply leaves the tree alone.
"""

from ..errors import RewriteBudgetExceeded
from ..expr import (
    Apply,
    BinaryOp,
    Expr,
    ExternCall,
    For,
    Ident,
    If,
    Iterate,
    Lambda,
    Let,
    Lookup,
    MakeVector,
    Merge,
    NewBuilder,
    Result,
    Sort,
    SugarOp,
    ToVec,
    children,
    walk,
)
from ..types import F32, F64, Scalar, Simd

# Nodes that create, feed, or consume builders. Their order relative to one
# another is observable, so no pass may duplicate, drop, or freely move them.
_EFFECT_NODES = (NewBuilder, Merge, Result, For, ExternCall, SugarOp)

# Nodes that can raise at runtime even on a well-typed program.
_PARTIAL_NODES = (Lookup, Iterate, Sort, Apply, MakeVector, ToVec) + _EFFECT_NODES


def is_pure(e: Expr) -> bool:
    """True when two evaluations of e are indistinguishable.

    Pure expressions may still raise (an out-of-bounds lookup raises the same
    way every time), so purity licenses sharing and reordering but not
    unconditional deletion.
    """
    return not any(isinstance(n, _EFFECT_NODES) for n in walk(e))


def _float_kind(ty) -> bool:
    if isinstance(ty, (Scalar, Simd)):
        return ty.kind in (F32, F64)
    return False


def is_total(e: Expr) -> bool:
    """True when e can neither fail nor allocate.

    This is the bar for evaluating an expression eagerly where the original
    program may not have evaluated it at all (predication, dead-code drops).
    Integer division is partial; float division is not (IEEE gives inf/nan).
    """
    for n in walk(e):
        if isinstance(n, _PARTIAL_NODES):
            return False
        if isinstance(n, BinaryOp) and n.op in ("/", "%") and not _float_kind(n.lhs.ty):
            return False
    return True


def count_uses(e: Expr, name: str) -> int:
    """Free occurrences of name inside e."""
    if isinstance(e, Ident):
        return 1 if e.name == name else 0
    if isinstance(e, Let):
        n = count_uses(e.value, name)
        if e.name != name:
            n += count_uses(e.body, name)
        return n
    if isinstance(e, Lambda):
        if any(p.name == name for p in e.params):
            return 0
        return count_uses(e.body, name)
    return sum(count_uses(c, name) for c in children(e))


def use_context(e: Expr, name: str) -> tuple[bool, bool]:
    """(under_lambda, conditional) over all free uses of name in e.

    under_lambda: some use sits inside a function body, so moving a value to
    its use site would change how many times it runs. conditional: some use
    sits on a path that may not execute (if arm, short-circuit right side).
    """
    under_lambda = False
    conditional = False

    def go(n: Expr, lam: bool, cond: bool) -> None:
        nonlocal under_lambda, conditional
        if isinstance(n, Ident):
            if n.name == name:
                under_lambda = under_lambda or lam
                conditional = conditional or cond
            return
        if isinstance(n, Let):
            go(n.value, lam, cond)
            if n.name != name:
                go(n.body, lam, cond)
            return
        if isinstance(n, Lambda):
            if all(p.name != name for p in n.params):
                go(n.body, True, cond)
            return
        if isinstance(n, If):
            go(n.cond, lam, cond)
            go(n.on_true, lam, True)
            go(n.on_false, lam, True)
            return
        if isinstance(n, BinaryOp) and n.op in ("&&", "||"):
            go(n.lhs, lam, cond)
            go(n.rhs, lam, True)
            return
        for c in children(n):
            go(c, lam, cond)

    go(e, False, False)
    return under_lambda, conditional


def loop_count(e: Expr) -> int:
    return sum(1 for n in walk(e) if isinstance(n, For))


class Budget:
    """Per-pass rewrite allowance.

    A pass that keeps firing past its allowance is cycling, and the right
    response is a loud error rather than returning whatever tree it reached.
    """

    __slots__ = ("pass_name", "limit", "remaining")

    def __init__(self, pass_name: str, limit: int):
        self.pass_name = pass_name
        self.limit = limit
        self.remaining = limit

    def spend(self, n: int = 1) -> None:
        self.remaining -= n
        if self.remaining < 0:
            raise RewriteBudgetExceeded(self.pass_name, self.limit)


def rewrite_bottom_up(e: Expr, budget: Budget, rules, counter: list) -> Expr:
    """One full sweep: rebuild children first, then apply rules at each node.

    Each rule returns a replacement node or None. Rules are retried on the
    replacement until none fires, so a rule must make measurable progress or
    the budget will stop it.
    """

    def go(n: Expr) -> Expr:
        from ..expr import map_children

        n = map_children(n, go)
        while True:
            for rule in rules:
                out = rule(n)
                if out is not None:
                    budget.spend()
                    counter[0] += 1
                    n = out
                    break
            else:
                return n

    return go(e)


def rewrite_top_down(e: Expr, budget: Budget, rules, counter: list) -> Expr:
    """One full sweep applying rules at each node before descending.

    The right direction for rules that want the widest view of a region,
    like grouping a whole let chain: firing at the outermost node first keeps
    an inner firing from breaking the larger pattern apart.
    """

    def go(n: Expr) -> Expr:
        from ..expr import map_children

        while True:
            for rule in rules:
                out = rule(n)
                if out is not None:
                    budget.spend()
                    counter[0] += 1
                    n = out
                    break
            else:
                break
        return map_children(n, go)

    return go(e)
