"""Canonical text rendering of IR trees.

The output is a single line that reparses to the same tree (up to spans), with
parentheses only where precedence demands them.  Golden comparisons elsewhere
rely on ``print_expr(alpha_normalize(e))`` being a stable fingerprint.
"""
from __future__ import annotations

from .expr import (
    Apply,
    BinaryOp,
    BitSelect,
    Broadcast,
    CastScalar,
    Expr,
    ExternCall,
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
    MakeVector,
    Merge,
    NewBuilder,
    Result,
    Sort,
    SugarOp,
    ToVec,
    UnaryOp,
)
from .types import BOOL, F32, Function, I32, IrType

_BINOP_LEVEL = {
    "||": 0,
    "&&": 1,
    "|": 2,
    "&": 3,
    "==": 4,
    "!=": 4,
    "<": 5,
    "<=": 5,
    ">": 5,
    ">=": 5,
    "+": 6,
    "-": 6,
    "*": 7,
    "/": 7,
    "%": 7,
}
_UNARY_LEVEL = 50
_ATOM_LEVEL = 100
_STMT_LEVEL = -1  # let and lambda: never bare inside an operator


def _level(e: Expr) -> int:
    if isinstance(e, BinaryOp):
        if e.op in ("min", "max"):
            return _ATOM_LEVEL  # printed as a call
        return _BINOP_LEVEL[e.op]
    if isinstance(e, UnaryOp):
        return _UNARY_LEVEL
    if isinstance(e, (Let, Lambda)):
        return _STMT_LEVEL
    if isinstance(e, Literal) and isinstance(e.value, (int, float)) and not isinstance(e.value, bool) and e.value < 0:
        return _UNARY_LEVEL  # prints with a leading minus
    return _ATOM_LEVEL


def _float_text(v: float) -> str:
    if v != v:
        return "(0.0 / 0.0)"  # no literal spelling for nan
    if v == float("inf"):
        return "1e9999"
    if v == float("-inf"):
        return "-1e9999"
    s = repr(v)
    if "." not in s and "e" not in s and "E" not in s:
        s += ".0"
    return s


def _literal_text(e: Literal) -> str:
    if e.kind == BOOL or isinstance(e.value, bool):
        return "true" if e.value else "false"
    if isinstance(e.value, int):
        return str(e.value) + ("si32" if e.kind == I32 else "")
    text = _float_text(e.value)
    if e.kind == F32 and not text.startswith("("):
        text += "f"
    return text


def _ann_text(ty) -> str:
    return str(ty)


def print_expr(e: Expr) -> str:
    return _p(e)


def _operand(e: Expr, min_level: int) -> str:
    text = _p(e)
    if _level(e) < min_level:
        return f"({text})"
    return text


def _p(e: Expr) -> str:
    if isinstance(e, Literal):
        return _literal_text(e)
    if isinstance(e, Ident):
        return e.name
    if isinstance(e, Let):
        value = _p(e.value)
        if isinstance(e.value, (Let, Lambda)):
            value = f"({value})"
        return f"{e.name} := {value}; {_p(e.body)}"
    if isinstance(e, Lambda):
        params = []
        for p in e.params:
            if p.ty_ann is not None and not isinstance(p.ty_ann, Function):
                params.append(f"{p.name}: {_ann_text(p.ty_ann)}")
            else:
                params.append(p.name)
        return f"({', '.join(params)}) => {_p(e.body)}"
    if isinstance(e, BinaryOp):
        if e.op in ("min", "max"):
            return f"{e.op}({_p(e.lhs)}, {_p(e.rhs)})"
        lvl = _BINOP_LEVEL[e.op]
        lhs = _operand(e.lhs, lvl)
        rhs = _operand(e.rhs, lvl + 1)
        return f"{lhs} {e.op} {rhs}"
    if isinstance(e, UnaryOp):
        inner = _p(e.operand)
        if _level(e.operand) < _ATOM_LEVEL:
            inner = f"({inner})"
        return f"{e.op}{inner}"
    if isinstance(e, If):
        return f"if({_p(e.cond)}, {_p(e.on_true)}, {_p(e.on_false)})"
    if isinstance(e, BitSelect):
        return f"bitselect({_p(e.cond)}, {_p(e.on_true)}, {_p(e.on_false)})"
    if isinstance(e, Iterate):
        return f"iterate({_p(e.init)}, {_p(e.update)})"
    if isinstance(e, Lookup):
        return f"lookup({_p(e.coll)}, {_p(e.index)})"
    if isinstance(e, FieldAccess):
        return f"{_postfix_base(e.base)}.{e.ordinal}"
    if isinstance(e, Len):
        return f"len({_p(e.coll)})"
    if isinstance(e, Sort):
        return f"sort({_p(e.vec)}, {_p(e.key)})"
    if isinstance(e, ToVec):
        return f"tovec({_p(e.mapping)})"
    if isinstance(e, MakeStruct):
        return "{" + ", ".join(_p(x) for x in e.items) + "}"
    if isinstance(e, MakeVector):
        return "[" + ", ".join(_p(x) for x in e.items) + "]"
    if isinstance(e, NewBuilder):
        text = str(e.kind)
        if e.arg is not None:
            text += f"({_p(e.arg)})"
        return text
    if isinstance(e, Merge):
        return f"merge({_p(e.builder)}, {_p(e.value)})"
    if isinstance(e, Result):
        return f"result({_p(e.builder)})"
    if isinstance(e, For):
        if len(e.iters) == 1:
            iters = _iter_text(e.iters[0])
        else:
            iters = "{" + ", ".join(_iter_text(it) for it in e.iters) + "}"
        return f"for({iters}, {_p(e.builders)}, {_p(e.func)})"
    if isinstance(e, Apply):
        base = _postfix_base(e.func)
        if isinstance(e.func, NewBuilder):
            base = f"({_p(e.func)})"  # keep distinct from a constructor argument
        return f"{base}({', '.join(_p(a) for a in e.args)})"
    if isinstance(e, ExternCall):
        parts = [e.name] + [_p(a) for a in e.args]
        return f"call({', '.join(parts)})"
    if isinstance(e, Broadcast):
        return f"broadcast({_p(e.value)})"
    if isinstance(e, CastScalar):
        return f"cast({_p(e.value)}, {e.kind})"
    if isinstance(e, SugarOp):
        return f"{e.name}({', '.join(_p(a) for a in e.args)})"
    raise TypeError(f"cannot print {type(e).__name__}")


def _postfix_base(base: Expr) -> str:
    text = _p(base)
    if isinstance(base, (Ident, FieldAccess, Apply, MakeStruct, MakeVector)):
        return text
    if isinstance(base, Literal) and _level(base) == _ATOM_LEVEL and not isinstance(base.value, float):
        return text
    if isinstance(
        base,
        (If, BitSelect, Iterate, Lookup, Len, Sort, ToVec, Merge, Result, For, ExternCall, Broadcast, CastScalar, SugarOp),
    ):
        return text
    return f"({text})"


def _iter_text(it: IterSpec) -> str:
    if it.simd:
        return f"simditer({_p(it.data)})"
    if it.start is not None:
        return f"iter({_p(it.data)}, {_p(it.start)}, {_p(it.end)}, {_p(it.stride)})"
    plain = _p(it.data)
    if isinstance(it.data, (Let, Lambda)):
        # A bare lambda here would swallow the following comma of the loop.
        return f"iter(({plain}))"
    return plain


def print_type(t: IrType) -> str:
    return str(t)
