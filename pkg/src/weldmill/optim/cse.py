"""Common subexpression elimination.

Works one scope at a time, where a scope is the region of the tree that can
see one set of bindings: the program itself, each lambda body, and each let
body. Within a scope, pure subtrees that print identically and always run
are bound once at the top of the scope and every copy becomes a name. The
scope discipline keeps the transform sound under shadowing: a candidate
never moves past a binder it reads from, because candidates never cross
binders at all.
"""

from dataclasses import replace

from ..expr import (
    BinaryOp,
    Expr,
    Ident,
    If,
    Lambda,
    Let,
    Literal,
    children,
    count_nodes,
    fresh_name,
    map_children,
)
from ..printer import print_expr
from .support import Budget, is_pure

_MIN_NODES = 3


def _eligible(e: Expr) -> bool:
    if isinstance(e, (Ident, Literal, Lambda)):
        return False
    return count_nodes(e) >= _MIN_NODES and is_pure(e)


def _map_scopes(e: Expr, fn) -> Expr:
    """Apply fn to every nested scope root reachable from this scope."""
    if isinstance(e, Lambda):
        return replace(e, body=fn(e.body))
    if isinstance(e, Let):
        return replace(e, value=_map_scopes(e.value, fn), body=fn(e.body))
    return map_children(e, lambda c: _map_scopes(c, fn))


def _collect(e: Expr, always: bool, counts: dict) -> None:
    if always and _eligible(e):
        key = print_expr(e)
        seen = counts.get(key)
        counts[key] = (seen[0] + 1, seen[1]) if seen else (1, e)
    if isinstance(e, Lambda):
        return
    if isinstance(e, Let):
        _collect(e.value, always, counts)
        return
    if isinstance(e, If):
        _collect(e.cond, always, counts)
        _collect(e.on_true, False, counts)
        _collect(e.on_false, False, counts)
        return
    if isinstance(e, BinaryOp) and e.op in ("&&", "||"):
        _collect(e.lhs, always, counts)
        _collect(e.rhs, False, counts)
        return
    for c in children(e):
        _collect(c, always, counts)


def _replace_in_scope(e: Expr, key: str, repl: Expr) -> Expr:
    if print_expr(e) == key:
        return repl
    if isinstance(e, Lambda):
        return e
    if isinstance(e, Let):
        return replace(e, value=_replace_in_scope(e.value, key, repl))
    return map_children(e, lambda c: _replace_in_scope(c, key, repl))


def _scope(e: Expr, budget: Budget, counter: list) -> Expr:
    e = _map_scopes(e, lambda s: _scope(s, budget, counter))
    bindings: list[tuple[str, Expr]] = []
    while True:
        counts: dict[str, tuple[int, Expr]] = {}
        _collect(e, True, counts)
        best = None
        for key, (n, node) in counts.items():
            if n < 2:
                continue
            rank = (count_nodes(node), key)
            if best is None or rank > best[0]:
                best = (rank, key, node)
        if best is None:
            break
        budget.spend()
        counter[0] += 1
        _, key, node = best
        name = fresh_name("shared")
        bindings.append((name, node))
        e = _replace_in_scope(e, key, Ident(name))
    for name, node in reversed(bindings):
        e = Let(name, node, e)
    return e


def run(e: Expr, budget: Budget) -> tuple[Expr, int]:
    counter = [0]
    return _scope(e, budget, counter), counter[0]
