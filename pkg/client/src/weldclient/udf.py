"""Translation of small Python functions into runtime expression text.

The translator reads a function's source with `inspect`, parses it with
`ast`, and walks the tree emitting the runtime's surface syntax. Only a
deliberately narrow subset is accepted: arithmetic, comparisons, boolean
connectives, tuple construction and constant-index tuple access, list
indexing, and the builtins `map` and `reduce` (the three-argument form,
with an explicit initial value). Anything else raises `TranslationError`
naming the construct, so the caller knows exactly what to rewrite.
Dictionaries in particular are rejected: the wire format cannot carry
them.

Numbers the function closes over are not inlined into the text; they are
lifted into extra leaf dependencies so the same translated body can be
reused against different constants. Closures over mutable state are out
of scope by construction: only int, float, and bool cell values are
accepted, and they are captured at translation time.
"""

from __future__ import annotations

import ast
import builtins
import inspect
import re
import textwrap
from dataclasses import dataclass
from typing import Any, Callable

from .errors import TranslationError
from .typetext import Scalar, Struct, Type, Vec, parse_signature

# Words the runtime grammar reserves, plus the v<N>/t<N> shapes the
# transports use for dependency names. Parameters that collide are
# renamed with a trailing underscore before the body is emitted.
_RESERVED = {
    "if", "else", "true", "false", "iterate", "lookup", "len", "sort", "tovec",
    "merge", "result", "for", "call", "iter", "simditer", "min", "max", "map",
    "filter", "flatmap", "reduce", "zip", "groupby", "broadcast", "cast",
    "bitselect", "vecbuilder", "merger", "dictmerger", "vecmerger",
    "groupbuilder", "vec", "dict", "simd", "bool", "i32", "i64", "f32", "f64",
}
_DEP_SHAPE_RE = re.compile(r"^[vt]\d+$")

# Expression binding strength, loosest first, mirroring the runtime's
# C-style precedence for the operators we emit.
_LEVEL_OR = 0
_LEVEL_AND = 1
_LEVEL_EQ = 2
_LEVEL_CMP = 3
_LEVEL_ADD = 4
_LEVEL_MUL = 5
_LEVEL_UNARY = 6
_LEVEL_ATOM = 7

_BINOPS: dict[type, tuple[str, int]] = {
    ast.Add: ("+", _LEVEL_ADD),
    ast.Sub: ("-", _LEVEL_ADD),
    ast.Mult: ("*", _LEVEL_MUL),
    ast.Div: ("/", _LEVEL_MUL),
    ast.Mod: ("%", _LEVEL_MUL),
}
_BINOP_NAMES = {
    ast.Pow: "'**'",
    ast.FloorDiv: "'//' (write '/'; division already truncates)",
    ast.LShift: "'<<'",
    ast.RShift: "'>>'",
    ast.BitOr: "'|'",
    ast.BitAnd: "'&'",
    ast.BitXor: "'^'",
    ast.MatMult: "'@'",
}
_COMPARES: dict[type, tuple[str, int]] = {
    ast.Lt: ("<", _LEVEL_CMP),
    ast.LtE: ("<=", _LEVEL_CMP),
    ast.Gt: (">", _LEVEL_CMP),
    ast.GtE: (">=", _LEVEL_CMP),
    ast.Eq: ("==", _LEVEL_EQ),
    ast.NotEq: ("!=", _LEVEL_EQ),
}

# Placeholder wrapping for lifted constants: \x01<index>\x01 can never
# appear in emitted syntax, so substitution at render time is exact.
_MARK = "\x01"
_MARK_RE = re.compile("\x01(\\d+)\x01")


@dataclass(frozen=True)
class UdfSignature:
    """Declared parameter and return types of a user function."""

    params: tuple[Type, ...]
    ret: Type

    @classmethod
    def parse(cls, text: str) -> "UdfSignature":
        params, ret = parse_signature(text)
        return cls(params, ret)

    def render(self) -> str:
        return "(" + ", ".join(p.render() for p in self.params) + ") => " + self.ret.render()


@dataclass(frozen=True)
class Udf:
    """A Python function together with its translated body.

    `param_names` and `body` carry the runtime-syntax form; `constants`
    holds closed-over numbers in the order the body's placeholders
    reference them. The original function stays callable.
    """

    fn: Callable
    signature: UdfSignature
    param_names: tuple[str, ...]
    body: str
    constants: tuple[tuple[Any, Type], ...]

    def __call__(self, *args, **kwargs):
        return self.fn(*args, **kwargs)

    def lambda_text(self, constant_names: list[str] | None = None) -> str:
        """Render as a runtime lambda, naming lifted constants.

        With no names given, constants display as c0, c1, ... which is
        readable but not executable; transports pass the dependency
        names they actually bound.
        """
        names = constant_names
        if names is None:
            names = [f"c{i}" for i in range(len(self.constants))]
        if len(names) != len(self.constants):
            raise ValueError(
                f"udf lifts {len(self.constants)} constants but {len(names)} names were given"
            )
        body = _MARK_RE.sub(lambda m: names[int(m.group(1))], self.body)
        params = ", ".join(
            f"{name}:{ty.render()}" for name, ty in zip(self.param_names, self.signature.params)
        )
        return f"({params}) => {body}"

    @property
    def text(self) -> str:
        return self.lambda_text()


def weld(signature: str) -> Callable[[Callable], Udf]:
    """Decorator: translate a function eagerly against a signature.

        @weld("(i64) => i64")
        def successor(x):
            return x + 1

    The result still works as a plain Python function, and carries the
    translated form for the lazy containers to splice into programs.
    """

    def decorate(fn: Callable) -> Udf:
        return translate(fn, signature)

    return decorate


def translate(fn: Callable, signature: UdfSignature | str) -> Udf:
    """Translate a Python lambda or single-return function."""
    if isinstance(signature, str):
        signature = UdfSignature.parse(signature)
    node = _function_node(fn)
    params = _parameter_names(node, len(signature.params))
    used = set(params)
    safe = tuple(_safe_name(p, used) for p in params)
    env = {orig: (new, ty) for orig, new, ty in zip(params, safe, signature.params)}
    tr = _Translator(fn)
    body, _, _ = tr.expr(_body_expr(node), env)
    return Udf(fn, signature, safe, body, tuple(tr.constants))


def _function_node(fn: Callable) -> ast.Lambda | ast.FunctionDef:
    try:
        source = textwrap.dedent(inspect.getsource(fn))
    except (OSError, TypeError) as err:
        raise TranslationError(f"cannot read source of {fn!r}: {err}") from err
    try:
        tree = ast.parse(source)
    except SyntaxError as err:
        raise TranslationError(
            f"cannot parse the source around {getattr(fn, '__name__', fn)!r}; "
            "define the function on its own statement"
        ) from err
    if fn.__name__ == "<lambda>":
        for node in ast.walk(tree):
            if isinstance(node, ast.Lambda):
                return node
        raise TranslationError("no lambda found in the function's source")
    for node in ast.walk(tree):
        if isinstance(node, ast.FunctionDef) and node.name == fn.__name__:
            return node
    raise TranslationError(f"no definition of {fn.__name__!r} found in its source")


def _parameter_names(node: ast.Lambda | ast.FunctionDef, declared: int) -> list[str]:
    args = node.args
    if args.vararg or args.kwarg:
        raise TranslationError("*args/**kwargs parameters are not supported")
    if args.kwonlyargs or args.posonlyargs:
        raise TranslationError("keyword-only and positional-only parameters are not supported")
    if args.defaults:
        raise TranslationError("parameter defaults are not supported")
    names = [a.arg for a in args.args]
    if len(names) != declared:
        raise TranslationError(
            f"function takes {len(names)} parameter(s) but the signature declares {declared}"
        )
    return names


def _body_expr(node: ast.Lambda | ast.FunctionDef) -> ast.expr:
    if isinstance(node, ast.Lambda):
        return node.body
    stmts = list(node.body)
    if stmts and isinstance(stmts[0], ast.Expr) and isinstance(stmts[0].value, ast.Constant) \
            and isinstance(stmts[0].value.value, str):
        stmts = stmts[1:]  # docstring
    if len(stmts) == 1 and isinstance(stmts[0], ast.Return) and stmts[0].value is not None:
        return stmts[0].value
    for s in stmts:
        if not isinstance(s, ast.Return):
            raise TranslationError(f"{_stmt_name(s)} is not supported; "
                                   "the body must be a single return")
    raise TranslationError("the body must be a single return with a value")


def _stmt_name(s: ast.stmt) -> str:
    if isinstance(s, ast.Expr) and isinstance(s.value, ast.Call):
        fn = s.value.func
        if isinstance(fn, ast.Name):
            return f"a call to {fn.id}()"
    names = {
        ast.Assign: "an assignment",
        ast.AugAssign: "an augmented assignment",
        ast.AnnAssign: "an annotated assignment",
        ast.For: "a for-loop",
        ast.While: "a while-loop",
        ast.If: "an if statement",
        ast.With: "a with block",
        ast.Try: "a try block",
        ast.Raise: "a raise",
        ast.Assert: "an assert",
        ast.Import: "an import",
        ast.ImportFrom: "an import",
        ast.Pass: "a pass",
    }
    return names.get(type(s), f"a {type(s).__name__.lower()} statement")


def _safe_name(name: str, used: set[str]) -> str:
    if name not in _RESERVED and not _DEP_SHAPE_RE.match(name):
        return name
    candidate = name + "_"
    while candidate in used or candidate in _RESERVED:
        candidate += "_"
    used.add(candidate)
    return candidate


def _constant_type(value: Any) -> Type | None:
    if isinstance(value, bool):
        return Scalar("bool")
    if isinstance(value, int):
        return Scalar("i64")
    if isinstance(value, float):
        return Scalar("f64")
    return None


class _Translator:
    """Walks one function's AST; collects lifted constants as it goes."""

    def __init__(self, fn: Callable):
        self.fn = fn
        self.constants: list[tuple[Any, Type]] = []

    # --- name resolution against the closure and module globals ---

    def _resolve(self, name: str):
        code = self.fn.__code__
        if self.fn.__closure__ and name in code.co_freevars:
            cell = self.fn.__closure__[code.co_freevars.index(name)]
            return True, cell.cell_contents
        if name in self.fn.__globals__:
            return True, self.fn.__globals__[name]
        if hasattr(builtins, name):
            return True, getattr(builtins, name)
        return False, None

    def _lift(self, value: Any, what: str) -> tuple[str, Type]:
        ty = _constant_type(value)
        if ty is None:
            raise TranslationError(
                f"{what} has unsupported type {type(value).__name__}; "
                "only int, float, and bool values can cross"
            )
        if isinstance(value, float) and (value != value or value in (float("inf"), float("-inf"))):
            raise TranslationError(f"{what} is not a finite number")
        index = len(self.constants)
        self.constants.append((value, ty))
        return f"{_MARK}{index}{_MARK}", ty

    def _splice(self, udf: "Udf") -> str:
        """Inline another translated function, remapping its constants."""
        base = len(self.constants)
        self.constants.extend(udf.constants)
        names = [f"{_MARK}{base + i}{_MARK}" for i in range(len(udf.constants))]
        return udf.lambda_text(names)

    # --- expressions ---

    def expr(self, node: ast.expr, env: dict[str, tuple[str, Type]]) -> tuple[str, Type, int]:
        """Emit one expression; returns (text, type, binding level)."""
        if isinstance(node, ast.Constant):
            return self._constant(node)
        if isinstance(node, ast.Name):
            return self._name(node, env)
        if isinstance(node, ast.BinOp):
            return self._binop(node, env)
        if isinstance(node, ast.Compare):
            return self._compare(node, env)
        if isinstance(node, ast.BoolOp):
            return self._boolop(node, env)
        if isinstance(node, ast.UnaryOp):
            return self._unary(node, env)
        if isinstance(node, ast.Tuple):
            return self._tuple(node, env)
        if isinstance(node, ast.Subscript):
            return self._subscript(node, env)
        if isinstance(node, ast.Call):
            return self._call(node, env)
        if isinstance(node, (ast.Dict, ast.DictComp)):
            raise TranslationError("dictionaries are not supported")
        if isinstance(node, ast.List):
            raise TranslationError("list literals are not supported; pass data as a dependency")
        if isinstance(node, (ast.ListComp, ast.SetComp, ast.GeneratorExp)):
            raise TranslationError("comprehensions are not supported; use map/reduce")
        if isinstance(node, ast.IfExp):
            raise TranslationError("conditional expressions are not supported")
        if isinstance(node, ast.Attribute):
            raise TranslationError(f"attribute access '.{node.attr}' is not supported")
        if isinstance(node, ast.Lambda):
            raise TranslationError("a bare lambda only makes sense as a map/reduce argument")
        raise TranslationError(f"{type(node).__name__} expressions are not supported")

    def _child(self, node, env, minimum: int) -> tuple[str, Type]:
        text, ty, level = self.expr(node, env)
        if level < minimum:
            text = f"({text})"
        return text, ty

    def _constant(self, node: ast.Constant) -> tuple[str, Type, int]:
        v = node.value
        if isinstance(v, bool):
            return ("true" if v else "false"), Scalar("bool"), _LEVEL_ATOM
        if isinstance(v, int):
            return str(v), Scalar("i64"), _LEVEL_ATOM
        if isinstance(v, float):
            if v != v or v in (float("inf"), float("-inf")):
                raise TranslationError("non-finite float literals are not supported")
            return repr(v), Scalar("f64"), _LEVEL_ATOM
        if v is None:
            raise TranslationError("None has no runtime value")
        raise TranslationError(f"{type(v).__name__} literals are not supported")

    def _name(self, node: ast.Name, env) -> tuple[str, Type, int]:
        if node.id in env:
            name, ty = env[node.id]
            return name, ty, _LEVEL_ATOM
        found, value = self._resolve(node.id)
        if not found:
            raise TranslationError(f"unknown name {node.id!r}")
        text, ty = self._lift(value, f"closure variable {node.id!r}")
        return text, ty, _LEVEL_ATOM

    def _binop(self, node: ast.BinOp, env) -> tuple[str, Type, int]:
        entry = _BINOPS.get(type(node.op))
        if entry is None:
            label = _BINOP_NAMES.get(type(node.op), type(node.op).__name__)
            raise TranslationError(f"operator {label} is not supported")
        op, level = entry
        left, lty = self._child(node.left, env, level)
        right, _ = self._child(node.right, env, level + 1)
        return f"{left} {op} {right}", lty, level

    def _compare(self, node: ast.Compare, env) -> tuple[str, Type, int]:
        if len(node.ops) != 1:
            raise TranslationError("chained comparisons are not supported; split with 'and'")
        entry = _COMPARES.get(type(node.ops[0]))
        if entry is None:
            raise TranslationError(
                f"comparison {type(node.ops[0]).__name__.lower()!r} is not supported"
            )
        op, level = entry
        left, _ = self._child(node.left, env, level)
        right, _ = self._child(node.comparators[0], env, level + 1)
        return f"{left} {op} {right}", Scalar("bool"), level

    def _boolop(self, node: ast.BoolOp, env) -> tuple[str, Type, int]:
        op = "&&" if isinstance(node.op, ast.And) else "||"
        level = _LEVEL_AND if isinstance(node.op, ast.And) else _LEVEL_OR
        parts = [self._child(v, env, level + (1 if i else 0))[0]
                 for i, v in enumerate(node.values)]
        return f" {op} ".join(parts), Scalar("bool"), level

    def _unary(self, node: ast.UnaryOp, env) -> tuple[str, Type, int]:
        if isinstance(node.op, ast.USub):
            text, ty = self._child(node.operand, env, _LEVEL_UNARY)
            return f"-{text}", ty, _LEVEL_UNARY
        if isinstance(node.op, ast.Not):
            text, _ = self._child(node.operand, env, _LEVEL_UNARY)
            return f"!{text}", Scalar("bool"), _LEVEL_UNARY
        if isinstance(node.op, ast.UAdd):
            return self.expr(node.operand, env)
        raise TranslationError("operator '~' is not supported")

    def _tuple(self, node: ast.Tuple, env) -> tuple[str, Type, int]:
        if not node.elts:
            raise TranslationError("empty tuples are not supported")
        parts = [self.expr(e, env) for e in node.elts]
        text = "{" + ", ".join(p[0] for p in parts) + "}"
        return text, Struct(tuple(p[1] for p in parts)), _LEVEL_ATOM

    def _subscript(self, node: ast.Subscript, env) -> tuple[str, Type, int]:
        if isinstance(node.slice, ast.Slice):
            raise TranslationError("slicing is not supported")
        # Fold literal indices, including the UnaryOp form of -1.
        try:
            literal = ast.literal_eval(node.slice)
        except (ValueError, TypeError, SyntaxError):
            literal = None
        base, bty = self._child(node.value, env, _LEVEL_ATOM)
        if isinstance(bty, Struct):
            if not isinstance(literal, int) or isinstance(literal, bool):
                raise TranslationError("tuple indices must be constant integers")
            if not 0 <= literal < len(bty.fields):
                raise TranslationError(
                    f"tuple index {literal} is out of range for {bty.render()}"
                )
            return f"{base}.{literal}", bty.fields[literal], _LEVEL_ATOM
        if isinstance(bty, Vec):
            if isinstance(literal, int) and not isinstance(literal, bool) and literal < 0:
                raise TranslationError("negative indices are not supported")
            itext, _, _ = self.expr(node.slice, env)
            return f"lookup({base}, {itext})", bty.elem, _LEVEL_ATOM
        raise TranslationError(f"cannot index a value of type {bty.render()}")

    def _call(self, node: ast.Call, env) -> tuple[str, Type, int]:
        if node.keywords:
            raise TranslationError("keyword arguments are not supported")
        fn = node.func
        if not isinstance(fn, ast.Name):
            raise TranslationError("only calls to map and reduce are supported")
        if fn.id == "print":
            raise TranslationError("a call to print() is not supported; "
                                   "the body must be a pure expression")
        if fn.id == "map":
            return self._map(node, env)
        if fn.id == "reduce":
            return self._reduce(node, env)
        raise TranslationError(f"a call to {fn.id}() is not supported")

    def _inner_lambda(self, node: ast.expr, env, param_types: tuple[Type, ...],
                      ret_hint: Type | None) -> tuple[str, Type]:
        """Translate a map/reduce function argument: a lambda or a named Udf."""
        if isinstance(node, ast.Lambda):
            if node.args.vararg or node.args.kwarg or node.args.defaults:
                raise TranslationError("map/reduce lambdas must take plain parameters")
            names = [a.arg for a in node.args.args]
            if len(names) != len(param_types):
                raise TranslationError(
                    f"this lambda takes {len(names)} parameter(s) "
                    f"but {len(param_types)} are expected here"
                )
            used = set(env) | set(names)
            safe = [_safe_name(n, used) for n in names]
            inner = dict(env)
            for orig, new, ty in zip(names, safe, param_types):
                inner[orig] = (new, ty)
            body, bty, _ = self.expr(node.body, inner)
            params = ", ".join(f"{n}:{t.render()}" for n, t in zip(safe, param_types))
            return f"({params}) => {body}", bty
        if isinstance(node, ast.Name):
            found, value = self._resolve(node.id)
            if found and isinstance(value, Udf):
                if tuple(value.signature.params) != param_types:
                    raise TranslationError(
                        f"{node.id!r} expects {value.signature.render()} "
                        "which does not fit here"
                    )
                return self._splice(value), value.signature.ret
        raise TranslationError("map/reduce need a lambda or a translated function")

    def _map(self, node: ast.Call, env) -> tuple[str, Type, int]:
        if len(node.args) != 2:
            raise TranslationError("map() takes exactly a function and one sequence here")
        seq_text, seq_ty, _ = self.expr(node.args[1], env)
        if not isinstance(seq_ty, Vec):
            raise TranslationError(f"map() needs a list argument, not {seq_ty.render()}")
        lam, ret = self._inner_lambda(node.args[0], env, (seq_ty.elem,), None)
        return f"map({seq_text}, {lam})", Vec(ret), _LEVEL_ATOM

    def _reduce(self, node: ast.Call, env) -> tuple[str, Type, int]:
        if len(node.args) != 3:
            raise TranslationError("reduce() needs a function, a sequence, "
                                   "and an explicit initial value")
        seq_text, seq_ty, _ = self.expr(node.args[1], env)
        if not isinstance(seq_ty, Vec):
            raise TranslationError(f"reduce() needs a list argument, not {seq_ty.render()}")
        init_text, init_ty, _ = self.expr(node.args[2], env)
        lam, _ = self._inner_lambda(node.args[0], env, (init_ty, seq_ty.elem), init_ty)
        return f"reduce({seq_text}, {init_text}, {lam})", init_ty, _LEVEL_ATOM
