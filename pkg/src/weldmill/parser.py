"""Text form of the IR.

The surface grammar, also documented in the README:

    program     :=  expr
    expr        :=  let | lambda | binary
    let         :=  IDENT ":=" expr ";" expr
    lambda      :=  "(" param ("," param)* ")" "=>" expr
    param       :=  IDENT (":" type)?
    binary      :=  usual C precedence over || && | & == != < <= > >= + - * / %
    unary       :=  ("-" | "!") unary | postfix
    postfix     :=  primary ("." INT | "(" args ")")*
    primary     :=  literal | IDENT | "(" expr ")" | "{" args "}" | "[" args "]"
                  | callform | builderctor | ifform
    ifform      :=  "if" "(" expr ("," expr "," expr ")" | ")" expr "else" expr)
    callform    :=  one of iterate lookup len sort tovec merge result for call
                    min max map filter flatmap reduce zip groupby broadcast cast
                    bitselect, applied to "(" args ")"
    builderctor :=  ("vecbuilder"|"merger"|"dictmerger"|"vecmerger"|"groupbuilder")
                    ("[" targ ("," targ)* "]")? ("(" expr ")")?
    targ        :=  type | "+" | "*" | "min" | "max" | literal
    iters       :=  "{" iteritem ("," iteritem)* "}" | iteritem
    iteritem    :=  "iter" "(" expr ("," expr "," expr "," expr)? ")"
                  | "simditer" "(" expr ")" | expr
    type        :=  "bool"|"i32"|"i64"|"f32"|"f64" | "vec" "[" type "]"
                  | "dict" "[" type "," type "]" | "{" type ("," type)* "}"
                  | "simd" "[" scalar "]" | builderctor-without-argument

Integer literals default to i64 (`si32` suffix for i32); float literals default
to f64 (`f` suffix for f32).  `//` starts a line comment.  Inputs are capped at
1 MiB.  Parsing either returns a tree or raises ParseError; it never crashes.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ParseError
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
    Param,
    Result,
    Sort,
    SUGAR_ARITY,
    SugarOp,
    ToVec,
    UnaryOp,
)
from .types import (
    BOOL,
    Builder,
    Dict,
    DictMerger,
    F32,
    F64,
    GroupBuilder,
    I32,
    I32_MAX,
    I32_MIN,
    I64,
    I64_MAX,
    I64_MIN,
    IrType,
    Merger,
    Scalar,
    Simd,
    Struct,
    Vec,
    VecBuilder,
    VecMerger,
    f32_round,
    identity_value,
)

MAX_SOURCE_BYTES = 1 << 20
MAX_DEPTH = 400

KEYWORDS = {
    "if", "else", "true", "false", "iterate", "lookup", "len", "sort", "tovec",
    "merge", "result", "for", "call", "iter", "simditer", "min", "max", "map",
    "filter", "flatmap", "reduce", "zip", "groupby", "broadcast", "cast",
    "bitselect", "vecbuilder", "merger", "dictmerger", "vecmerger",
    "groupbuilder", "vec", "dict", "simd", "bool", "i32", "i64", "f32", "f64",
}

SUGAR_NAMES = {"map", "filter", "flatmap", "reduce", "zip", "groupby"}
BUILDER_NAMES = {"vecbuilder", "merger", "dictmerger", "vecmerger", "groupbuilder"}
SCALAR_NAMES = {"bool": BOOL, "i32": I32, "i64": I64, "f32": F32, "f64": F64}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?(?:si32|f)?(?![A-Za-z0-9_]))
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|=>|==|!=|<=|>=|&&|\|\||[-+*/%<>!&|(){}\[\],;.:])
    """,
    re.VERBOSE,
)

# Binary operator precedence, loosest first (C order).
_PRECEDENCE = [
    ("||",),
    ("&&",),
    ("|",),
    ("&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("+", "-"),
    ("*", "/", "%"),
]
_OP_LEVEL = {op: i for i, level in enumerate(_PRECEDENCE) for op in level}


@dataclass(frozen=True)
class Token:
    kind: str  # "ident", "int", "float", punctuation text, "eof"
    text: str
    pos: int
    value: object = None
    suffix: str | None = None

    @property
    def end(self) -> int:
        return self.pos + len(self.text)


def _lex(src: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    n = len(src)
    while pos < n:
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ParseError(f"unexpected character {src[pos]!r}", span=(pos, pos + 1))
        if m.lastgroup == "ws":
            pos = m.end()
            continue
        text = m.group()
        if m.lastgroup == "num":
            body, suffix = text, None
            if body.endswith("si32"):
                body, suffix = body[:-4], "si32"
            elif body.endswith("f"):
                body, suffix = body[:-1], "f"
            if "." in body or "e" in body or "E" in body:
                if suffix == "si32":
                    raise ParseError("si32 suffix only applies to integers", span=(pos, m.end()))
                tokens.append(Token("float", text, pos, float(body), suffix))
            elif suffix == "f":
                tokens.append(Token("float", text, pos, float(body), suffix))
            else:
                tokens.append(Token("int", text, pos, int(body), suffix))
        elif m.lastgroup == "ident":
            tokens.append(Token("ident", text, pos))
        else:
            tokens.append(Token(text, text, pos))
        pos = m.end()
    tokens.append(Token("eof", "", n))
    return tokens


class _Parser:
    def __init__(self, src: str):
        if len(src.encode("utf-8", errors="replace")) > MAX_SOURCE_BYTES:
            raise ParseError(f"source exceeds {MAX_SOURCE_BYTES} bytes")
        self.src = src
        self.toks = _lex(src)
        self.i = 0
        self.depth = 0

    # -- token plumbing -----------------------------------------------------
    def peek(self, ahead: int = 0) -> Token:
        j = min(self.i + ahead, len(self.toks) - 1)
        return self.toks[j]

    def next(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def at_kw(self, word: str) -> bool:
        t = self.peek()
        return t.kind == "ident" and t.text == word

    def expect(self, kind: str, expected: str | None = None) -> Token:
        t = self.peek()
        if t.kind != kind:
            raise ParseError(
                f"unexpected {t.text!r}" if t.text else "unexpected end of input",
                span=(t.pos, t.end),
                expected=expected or kind,
            )
        return self.next()

    def fail(self, message: str, expected: str | None = None):
        t = self.peek()
        raise ParseError(message, span=(t.pos, t.end), expected=expected)

    def _enter(self):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            t = self.peek()
            raise ParseError("expression nests too deeply", span=(t.pos, t.end))

    def _leave(self):
        self.depth -= 1

    # -- expressions --------------------------------------------------------
    def parse_program(self) -> Expr:
        e = self.parse_expr()
        t = self.peek()
        if t.kind != "eof":
            raise ParseError(f"trailing input {t.text!r}", span=(t.pos, t.end), expected="end of input")
        return e

    def parse_expr(self) -> Expr:
        self._enter()
        try:
            if self.peek().kind == "ident" and self.peek().text not in KEYWORDS and self.peek(1).kind == ":=":
                return self.parse_let()
            if self.at("(") and self._lambda_ahead():
                return self.parse_lambda()
            return self.parse_binary(0)
        finally:
            self._leave()

    def parse_let(self) -> Expr:
        name_tok = self.next()
        self.expect(":=")
        value = self.parse_expr()
        self.expect(";", expected="';' after binding value")
        body = self.parse_expr()
        return Let(name=name_tok.text, value=value, body=body, span=(name_tok.pos, _span_end(body)))

    def _lambda_ahead(self) -> bool:
        # At '(' — look for a matching ')' directly followed by '=>'.
        depth = 0
        j = self.i
        while j < len(self.toks):
            k = self.toks[j].kind
            if k in ("(", "[", "{"):
                depth += 1
            elif k in (")", "]", "}"):
                depth -= 1
                if depth == 0:
                    return self.toks[j + 1].kind == "=>" if j + 1 < len(self.toks) else False
            elif k == "eof":
                return False
            j += 1
        return False

    def parse_lambda(self) -> Expr:
        start = self.expect("(").pos
        params: list[Param] = []
        if self.at(")"):
            self.fail("lambdas take at least one parameter")
        while True:
            name = self.expect("ident", expected="parameter name")
            if name.text in KEYWORDS:
                raise ParseError(f"{name.text!r} is reserved", span=(name.pos, name.end))
            ann = None
            if self.at(":"):
                self.next()
                ann = self.parse_type()
            params.append(Param(name.text, ann))
            if self.at(","):
                self.next()
                continue
            break
        self.expect(")")
        self.expect("=>")
        body = self.parse_expr()
        return Lambda(params=tuple(params), body=body, span=(start, _span_end(body)))

    def parse_binary(self, level: int) -> Expr:
        if level >= len(_PRECEDENCE):
            return self.parse_unary()
        lhs = self.parse_binary(level + 1)
        while self.peek().kind in _PRECEDENCE[level]:
            op = self.next().text
            rhs = self.parse_binary(level + 1)
            lhs = BinaryOp(op=op, lhs=lhs, rhs=rhs, span=(_span_start(lhs), _span_end(rhs)))
        return lhs

    def parse_unary(self) -> Expr:
        t = self.peek()
        if t.kind == "-":
            self.next()
            nxt = self.peek()
            if nxt.kind in ("int", "float"):
                self.next()
                return self._literal(nxt, negate=True, start=t.pos)
            operand = self.parse_unary()
            return UnaryOp(op="-", operand=operand, span=(t.pos, _span_end(operand)))
        if t.kind == "!":
            self.next()
            operand = self.parse_unary()
            return UnaryOp(op="!", operand=operand, span=(t.pos, _span_end(operand)))
        return self.parse_postfix()

    def parse_postfix(self) -> Expr:
        e = self.parse_primary()
        while True:
            if self.at("."):
                self.next()
                self._split_ordinal_float()
                idx = self.expect("int", expected="field ordinal")
                if idx.suffix is not None:
                    raise ParseError("field ordinals take no suffix", span=(idx.pos, idx.end))
                e = FieldAccess(base=e, ordinal=idx.value, span=(_span_start(e), idx.end))
            elif self.at("("):
                self.next()
                args = self.parse_args(")")
                end = self.expect(")").end
                e = Apply(func=e, args=tuple(args), span=(_span_start(e), end))
            else:
                return e

    def _split_ordinal_float(self) -> None:
        # `x.0.1` lexes the tail as the float 0.1; in ordinal position it is
        # really two field indices, so split the token back apart.
        t = self.peek()
        if t.kind == "float" and t.suffix is None and re.fullmatch(r"\d+\.\d+", t.text):
            a, b = t.text.split(".")
            mid = t.pos + len(a)
            self.toks[self.i : self.i + 1] = [
                Token("int", a, t.pos, int(a)),
                Token(".", ".", mid),
                Token("int", b, mid + 1, int(b)),
            ]

    def parse_args(self, closer: str) -> list[Expr]:
        args: list[Expr] = []
        if self.at(closer):
            return args
        while True:
            args.append(self.parse_expr())
            if self.at(","):
                self.next()
                continue
            return args

    def parse_primary(self) -> Expr:
        self._enter()
        try:
            t = self.peek()
            if t.kind in ("int", "float"):
                self.next()
                return self._literal(t)
            if t.kind == "(":
                self.next()
                e = self.parse_expr()
                self.expect(")")
                return e
            if t.kind == "{":
                self.next()
                items = self.parse_args("}")
                end = self.expect("}").end
                if not items:
                    raise ParseError("structs need at least one field", span=(t.pos, end))
                return MakeStruct(items=tuple(items), span=(t.pos, end))
            if t.kind == "[":
                self.next()
                items = self.parse_args("]")
                end = self.expect("]").end
                if not items:
                    raise ParseError("vector literals need at least one element", span=(t.pos, end))
                return MakeVector(items=tuple(items), span=(t.pos, end))
            if t.kind == "ident":
                return self.parse_word(t)
            self.fail(f"unexpected {t.text!r}" if t.text else "unexpected end of input", expected="an expression")
        finally:
            self._leave()

    def _literal(self, tok: Token, negate: bool = False, start: int | None = None) -> Expr:
        span = (start if start is not None else tok.pos, tok.end)
        if tok.kind == "int":
            v = -tok.value if negate else tok.value
            if tok.suffix == "si32":
                if not (I32_MIN <= v <= I32_MAX):
                    raise ParseError("i32 literal out of range", span=span)
                return Literal(value=v, kind=I32, span=span)
            if not (I64_MIN <= v <= I64_MAX):
                raise ParseError("integer literal out of range", span=span)
            return Literal(value=v, kind=None, span=span)
        v = -tok.value if negate else tok.value
        if tok.suffix == "f":
            return Literal(value=f32_round(v), kind=F32, span=span)
        return Literal(value=v, kind=None, span=span)

    def parse_word(self, t: Token) -> Expr:
        word = t.text
        if word == "true":
            self.next()
            return Literal(value=True, kind=BOOL, span=(t.pos, t.end))
        if word == "false":
            self.next()
            return Literal(value=False, kind=BOOL, span=(t.pos, t.end))
        if word == "if":
            return self.parse_if()
        if word in BUILDER_NAMES:
            return self.parse_builder_ctor()
        if word == "for":
            return self.parse_for()
        if word in SUGAR_NAMES:
            self.next()
            self.expect("(")
            args = self.parse_args(")")
            end = self.expect(")").end
            want = SUGAR_ARITY.get(word)
            if want is not None and len(args) != want:
                raise ParseError(f"{word} takes {want} arguments", span=(t.pos, end))
            if word == "zip" and len(args) < 2:
                raise ParseError("zip takes at least two vectors", span=(t.pos, end))
            return SugarOp(name=word, args=tuple(args), span=(t.pos, end))
        if word in ("iter", "simditer"):
            self.fail(f"{word} is only allowed in a loop's iteration position")
        if word in KEYWORDS and word not in ("min", "max"):
            handler = _CALLFORMS.get(word)
            if handler is None:
                self.fail(f"{word!r} cannot start an expression")
            return handler(self, t)
        if word in ("min", "max"):
            self.next()
            self.expect("(")
            a = self.parse_expr()
            self.expect(",")
            b = self.parse_expr()
            end = self.expect(")").end
            return BinaryOp(op=word, lhs=a, rhs=b, span=(t.pos, end))
        self.next()
        return Ident(name=word, span=(t.pos, t.end))

    def parse_if(self) -> Expr:
        t = self.next()
        self.expect("(")
        cond = self.parse_expr()
        if self.at(","):
            self.next()
            on_true = self.parse_expr()
            self.expect(",")
            on_false = self.parse_expr()
            end = self.expect(")").end
            return If(cond=cond, on_true=on_true, on_false=on_false, span=(t.pos, end))
        self.expect(")")
        on_true = self.parse_expr()
        if not self.at_kw("else"):
            self.fail("this form of if needs an else branch", expected="'else'")
        self.next()
        on_false = self.parse_expr()
        return If(cond=cond, on_true=on_true, on_false=on_false, span=(t.pos, _span_end(on_false)))

    # -- loops ---------------------------------------------------------------
    def parse_for(self) -> Expr:
        t = self.next()
        self.expect("(")
        iters: list[IterSpec] = []
        if self.at("{"):
            self.next()
            while True:
                iters.append(self.parse_iteritem())
                if self.at(","):
                    self.next()
                    continue
                break
            self.expect("}")
        else:
            iters.append(self.parse_iteritem())
        self.expect(",", expected="',' before the loop's builders")
        builders = self.parse_expr()
        self.expect(",", expected="',' before the loop function")
        func = self.parse_expr()
        end = self.expect(")").end
        return For(iters=tuple(iters), builders=builders, func=func, span=(t.pos, end))

    def parse_iteritem(self) -> IterSpec:
        if self.at_kw("iter"):
            self.next()
            self.expect("(")
            data = self.parse_expr()
            start = end_ = stride = None
            if self.at(","):
                self.next()
                start = self.parse_expr()
                self.expect(",")
                end_ = self.parse_expr()
                self.expect(",")
                stride = self.parse_expr()
            self.expect(")")
            return IterSpec(data=data, start=start, end=end_, stride=stride)
        if self.at_kw("simditer"):
            self.next()
            self.expect("(")
            data = self.parse_expr()
            self.expect(")")
            return IterSpec(data=data, simd=True)
        return IterSpec(data=self.parse_expr())

    # -- builder constructors -------------------------------------------------
    def parse_builder_ctor(self, in_type: bool = False) -> Expr:
        t = self.next()
        name = t.text
        targs: list = []
        end = t.end
        if self.at("["):
            self.next()
            while True:
                targs.append(self.parse_targ())
                if self.at(","):
                    self.next()
                    continue
                break
            end = self.expect("]").end
        kind, identity = self._assemble_builder(name, targs, (t.pos, end))
        arg = None
        if not in_type and self.at("(") and isinstance(kind, (VecBuilder, VecMerger)):
            self.next()
            arg = self.parse_expr()
            end = self.expect(")").end
        if not in_type and isinstance(kind, VecMerger) and arg is None:
            raise ParseError("vecmerger needs an initial vector argument", span=(t.pos, end))
        node = NewBuilder(kind=kind, arg=arg, span=(t.pos, end))
        if identity is not None:
            self._check_identity(kind, identity, (t.pos, end))
        return node

    def parse_targ(self):
        t = self.peek()
        if t.kind in ("+", "*"):
            self.next()
            return ("op", t.text)
        if t.kind == "ident" and t.text in ("min", "max"):
            self.next()
            return ("op", t.text)
        if t.kind in ("int", "float") or (t.kind == "-" and self.peek(1).kind in ("int", "float")):
            negate = t.kind == "-"
            if negate:
                self.next()
            tok = self.next()
            lit = self._literal(tok, negate=negate, start=t.pos)
            return ("lit", lit)
        return ("type", self.parse_type())

    def _assemble_builder(self, name: str, targs: list, span):
        types = [v for k, v in targs if k == "type"]
        ops = [v for k, v in targs if k == "op"]
        lits = [v for k, v in targs if k == "lit"]
        if len(ops) > 1 or len(lits) > 1:
            raise ParseError(f"too many arguments for {name}", span=span)
        op = ops[0] if ops else None
        identity = lits[0] if lits else None
        if name == "vecbuilder":
            if op or identity or len(types) > 1:
                raise ParseError("vecbuilder takes at most an element type", span=span)
            return VecBuilder(types[0] if types else None), None
        if name == "groupbuilder":
            if op or identity or len(types) not in (0, 2):
                raise ParseError("groupbuilder takes key and value types", span=span)
            return (GroupBuilder(types[0], types[1]) if types else GroupBuilder()), None
        if name in ("merger", "vecmerger"):
            if op is None or len(types) > 1:
                raise ParseError(f"{name} takes an optional element type and a merge op", span=span)
            cls = Merger if name == "merger" else VecMerger
            return cls(types[0] if types else None, op), identity
        # dictmerger
        if op is None or len(types) not in (0, 2):
            raise ParseError("dictmerger takes key and value types and a merge op", span=span)
        if identity is not None:
            raise ParseError("dictmerger takes no explicit identity", span=span)
        if types:
            return DictMerger(types[0], types[1], op), None
        return DictMerger(None, None, op), None

    def _check_identity(self, kind, lit: Literal, span):
        elem = getattr(kind, "elem", None)
        op = kind.op
        if elem is not None and isinstance(elem, Scalar):
            try:
                want = identity_value(op, elem.kind)
            except Exception:
                raise ParseError(f"{op!r} has no identity over {elem}", span=span)
            if not (lit.value == want):
                raise ParseError(
                    f"explicit identity {lit.value!r} differs from the derived identity {want!r}",
                    span=span,
                )
            return
        # Element type still open: only + and * have type-independent identities.
        if op == "+" and lit.value == 0:
            return
        if op == "*" and lit.value == 1:
            return
        raise ParseError(
            "explicit identity requires the element type (or must be the derived 0/1)",
            span=span,
        )

    # -- types ----------------------------------------------------------------
    def parse_type(self) -> IrType:
        self._enter()
        try:
            t = self.peek()
            if t.kind == "ident" and t.text in SCALAR_NAMES:
                self.next()
                return Scalar(SCALAR_NAMES[t.text])
            if t.kind == "ident" and t.text == "vec":
                self.next()
                self.expect("[")
                elem = self.parse_type()
                self.expect("]")
                return Vec(elem)
            if t.kind == "ident" and t.text == "dict":
                self.next()
                self.expect("[")
                key = self.parse_type()
                self.expect(",")
                value = self.parse_type()
                self.expect("]")
                return Dict(key, value)
            if t.kind == "ident" and t.text == "simd":
                self.next()
                self.expect("[")
                s = self.expect("ident", expected="a scalar kind")
                if s.text not in SCALAR_NAMES:
                    raise ParseError(f"unknown scalar kind {s.text!r}", span=(s.pos, s.end))
                self.expect("]")
                return Simd(SCALAR_NAMES[s.text])
            if t.kind == "{":
                self.next()
                fields = [self.parse_type()]
                while self.at(","):
                    self.next()
                    fields.append(self.parse_type())
                self.expect("}")
                return Struct(tuple(fields))
            if t.kind == "ident" and t.text in BUILDER_NAMES:
                node = self.parse_builder_ctor(in_type=True)
                return Builder(node.kind)
            self.fail(f"expected a type, found {t.text!r}" if t.text else "expected a type", expected="a type")
        finally:
            self._leave()


_CALLFORMS = {}


def _callform(name: str, arity: int, build):
    def handler(p: _Parser, t: Token) -> Expr:
        p.next()
        p.expect("(")
        args = p.parse_args(")")
        end = p.expect(")").end
        if len(args) != arity:
            raise ParseError(f"{name} takes {arity} argument(s)", span=(t.pos, end))
        return build(args, (t.pos, end))

    _CALLFORMS[name] = handler


_callform("iterate", 2, lambda a, s: Iterate(init=a[0], update=a[1], span=s))
_callform("lookup", 2, lambda a, s: Lookup(coll=a[0], index=a[1], span=s))
_callform("len", 1, lambda a, s: Len(coll=a[0], span=s))
_callform("sort", 2, lambda a, s: Sort(vec=a[0], key=a[1], span=s))
_callform("tovec", 1, lambda a, s: ToVec(mapping=a[0], span=s))
_callform("merge", 2, lambda a, s: Merge(builder=a[0], value=a[1], span=s))
_callform("result", 1, lambda a, s: Result(builder=a[0], span=s))
_callform("broadcast", 1, lambda a, s: Broadcast(value=a[0], span=s))
_callform("bitselect", 3, lambda a, s: BitSelect(cond=a[0], on_true=a[1], on_false=a[2], span=s))


def _parse_call(p: _Parser, t: Token) -> Expr:
    p.next()
    p.expect("(")
    name = p.expect("ident", expected="a host function name")
    if name.text in KEYWORDS:
        raise ParseError(f"{name.text!r} is reserved", span=(name.pos, name.end))
    args: list[Expr] = []
    while p.at(","):
        p.next()
        args.append(p.parse_expr())
    end = p.expect(")").end
    return ExternCall(name=name.text, args=tuple(args), span=(t.pos, end))


def _parse_cast(p: _Parser, t: Token) -> Expr:
    p.next()
    p.expect("(")
    value = p.parse_expr()
    p.expect(",")
    ty = p.parse_type()
    end = p.expect(")").end
    if not isinstance(ty, Scalar) or ty.kind == BOOL:
        raise ParseError("cast targets a non-bool scalar kind", span=(t.pos, end))
    return CastScalar(value=value, kind=ty.kind, span=(t.pos, end))


_CALLFORMS["call"] = _parse_call
_CALLFORMS["cast"] = _parse_cast


def _span_start(e: Expr) -> int:
    return e.span[0] if e.span else 0


def _span_end(e: Expr) -> int:
    return e.span[1] if e.span else 0


def parse(src: str) -> Expr:
    """Parse a program. Raises ParseError on any malformed input."""
    try:
        return _Parser(src).parse_program()
    except RecursionError:
        raise ParseError("expression nests too deeply")


def parse_type_text(src: str) -> IrType:
    p = _Parser(src)
    ty = p.parse_type()
    t = p.peek()
    if t.kind != "eof":
        raise ParseError(f"trailing input {t.text!r}", span=(t.pos, t.end))
    return ty
