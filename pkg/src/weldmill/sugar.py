"""Surface macros over the core loop-and-builder forms.

map, filter, flatmap, zip, and groupby are plain templates: the argument
expressions are substituted into a parsed skeleton and any resulting
direct lambda applications are reduced away.  reduce looks at its combining
function: a two-parameter lambda whose body is a single +, *, min, or max of
the two parameters turns into a merger loop (dropping the explicit identity
when it is the op's neutral value); anything else folds sequentially.

``register_macro`` accepts new rules, so the fixed set above is only the
default vocabulary.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

from .errors import SugarError
from .expr import (
    Apply,
    BinaryOp,
    Expr,
    FieldAccess,
    For,
    Ident,
    If,
    IterSpec,
    Iterate,
    Lambda,
    Len,
    Let,
    Literal,
    Lookup,
    MakeStruct,
    Merge,
    NewBuilder,
    Param,
    Result,
    SugarOp,
    fresh_name,
    map_children,
    substitute,
)
from .types import I64_MAX, I64_MIN, VecBuilder, I64

_MAX_EXPANSION_DEPTH = 100


@dataclass(frozen=True)
class MacroRule:
    """A named rewrite from a surface call to an expression tree.

    ``arity`` is the exact argument count, or None for variadic (>= 2).
    ``expand`` receives the already-desugared argument expressions.
    """

    name: str
    arity: int | None
    expand: Callable[[tuple[Expr, ...]], Expr]


MACROS: dict[str, MacroRule] = {}


def register_macro(rule: MacroRule) -> None:
    if rule.name in MACROS:
        raise SugarError(f"macro {rule.name!r} is already registered")
    MACROS[rule.name] = rule


def beta_reduce(e: Expr) -> Expr:
    """Collapse direct applications of literal lambdas, bottom-up."""
    e = map_children(e, beta_reduce)
    if isinstance(e, Apply) and isinstance(e.func, Lambda) and len(e.func.params) == len(e.args):
        binds = {p.name: a for p, a in zip(e.func.params, e.args)}
        return substitute(e.func.body, binds)
    return e


def template_rule(name: str, arity: int, source: str) -> MacroRule:
    """Build a rule from IR text with __p0..__pN standing for the arguments."""
    from .parser import parse

    tree = parse(source)

    def expand(args: tuple[Expr, ...]) -> Expr:
        binds = {f"__p{i}": a for i, a in enumerate(args)}
        return beta_reduce(substitute(tree, binds))

    return MacroRule(name, arity, expand)


def _expand_zip(args: tuple[Expr, ...]) -> Expr:
    b, i, x = fresh_name("b"), fresh_name("i"), fresh_name("x")
    loop = For(
        iters=tuple(IterSpec(data=a) for a in args),
        builders=NewBuilder(kind=VecBuilder(None)),
        func=Lambda(
            params=(Param(b), Param(i), Param(x)),
            body=Merge(builder=Ident(name=b), value=Ident(name=x)),
        ),
    )
    return Result(builder=loop)


def _merge_op_of(f: Expr) -> str | None:
    """The op of a two-parameter lambda like (x, y) => x + y, if it is one."""
    if not (isinstance(f, Lambda) and len(f.params) == 2):
        return None
    x, y = f.params[0].name, f.params[1].name
    b = f.body
    if not (isinstance(b, BinaryOp) and b.op in ("+", "*", "min", "max")):
        return None
    if not (isinstance(b.lhs, Ident) and isinstance(b.rhs, Ident)):
        return None
    if {b.lhs.name, b.rhs.name} != {x, y}:
        return None
    return b.op


def _is_neutral(op: str, e: Expr) -> bool:
    if not isinstance(e, Literal) or isinstance(e.value, bool):
        return False
    v = e.value
    if op == "+":
        return v == 0
    if op == "*":
        return v == 1
    if op == "min":
        return v == I64_MAX or v == float("inf")
    return v == I64_MIN or v == float("-inf")  # max


def _expand_reduce(args: tuple[Expr, ...]) -> Expr:
    vec, init, f = args
    op = _merge_op_of(f)
    if op is not None:
        from .types import Merger

        b, i, x = fresh_name("b"), fresh_name("i"), fresh_name("x")
        loop = Result(
            builder=For(
                iters=(IterSpec(data=vec),),
                builders=NewBuilder(kind=Merger(None, op)),
                func=Lambda(
                    params=(Param(b), Param(i), Param(x)),
                    body=Merge(builder=Ident(name=b), value=Ident(name=x)),
                ),
            )
        )
        if _is_neutral(op, init):
            return loop
        return BinaryOp(op=op, lhs=init, rhs=loop)

    # General fold: walk the vector front to back with an index/accumulator
    # pair.  iterate always runs its body once, hence the emptiness guard.
    rv, rid, s = fresh_name("v"), fresh_name("z"), fresh_name("s")
    idx = FieldAccess(base=Ident(name=s), ordinal=0)
    acc = FieldAccess(base=Ident(name=s), ordinal=1)
    one = Literal(value=1, kind=None)
    step = BinaryOp(op="+", lhs=idx, rhs=one)
    new_acc = beta_reduce(Apply(func=f, args=(acc, Lookup(coll=Ident(name=rv), index=idx))))
    update = Lambda(
        params=(Param(s),),
        body=MakeStruct(
            items=(
                MakeStruct(items=(step, new_acc)),
                BinaryOp(op="<", lhs=step, rhs=Len(coll=Ident(name=rv))),
            )
        ),
    )
    fold = FieldAccess(
        base=Iterate(
            init=MakeStruct(items=(Literal(value=0, kind=I64), Ident(name=rid))),
            update=update,
        ),
        ordinal=1,
    )
    guarded = If(
        cond=BinaryOp(op=">", lhs=Len(coll=Ident(name=rv)), rhs=Literal(value=0, kind=I64)),
        on_true=fold,
        on_false=Ident(name=rid),
    )
    return Let(name=rv, value=vec, body=Let(name=rid, value=init, body=guarded))


def _default_rules():
    yield template_rule(
        "map",
        2,
        "result(for(__p0, vecbuilder, (b, i, x) => merge(b, __p1(x))))",
    )
    yield template_rule(
        "filter",
        2,
        "result(for(__p0, vecbuilder, (b, i, x) => if(__p1(x), merge(b, x), b)))",
    )
    yield template_rule(
        "flatmap",
        2,
        "result(for(__p0, vecbuilder, (b, i, x) => for(__p1(x), b, (b2, i2, y) => merge(b2, y))))",
    )
    yield template_rule(
        "groupby",
        3,
        "result(for(__p0, groupbuilder, (b, i, x) => merge(b, {__p1(x), __p2(x)})))",
    )
    yield MacroRule("zip", None, _expand_zip)
    yield MacroRule("reduce", 3, _expand_reduce)


for _rule in _default_rules():
    register_macro(_rule)


def expand(e: Expr, _depth: int = 0, _scope: frozenset = frozenset()) -> Expr:
    """Rewrite every surface macro into core forms. Raises SugarError.

    Besides the dedicated surface nodes, a call ``name(args)`` expands when
    ``name`` is a registered macro and nothing in scope shadows it.
    """
    if _depth > _MAX_EXPANSION_DEPTH:
        raise SugarError("macro expansion goes too deep; is a macro recursive?")
    if isinstance(e, Let):
        value = expand(e.value, _depth, _scope)
        body = expand(e.body, _depth, _scope | {e.name})
        e = replace(e, value=value, body=body)
    elif isinstance(e, Lambda):
        body = expand(e.body, _depth, _scope | {p.name for p in e.params})
        e = replace(e, body=body)
    else:
        e = map_children(e, lambda c: expand(c, _depth, _scope))

    rule = None
    args = None
    if isinstance(e, SugarOp):
        rule = MACROS.get(e.name)
        if rule is None:
            raise SugarError(f"unknown macro {e.name!r}")
        args = e.args
    elif isinstance(e, Apply) and isinstance(e.func, Ident) and e.func.name not in _scope:
        rule = MACROS.get(e.func.name)
        args = e.args
    if rule is None:
        return e
    if rule.arity is not None and len(args) != rule.arity:
        raise SugarError(f"{rule.name} takes {rule.arity} arguments")
    if rule.arity is None and len(args) < 2:
        raise SugarError(f"{rule.name} takes at least two arguments")
    out = rule.expand(tuple(args))
    return expand(out, _depth + 1, _scope)
