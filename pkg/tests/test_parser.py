"""Surface grammar: parsing, printing, and the round-trip contract.

The printer emits canonical text, so the core property is print-then-parse
stability: for any tree, parse(print(tree)) prints back the same text.
Precedence is checked against Python's own evaluator on generated
arithmetic, which is an oracle that knows nothing about this parser.
"""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weldmill.errors import ParseError
from weldmill.expr import (
    BinaryOp,
    For,
    Ident,
    If,
    Lambda,
    Let,
    Literal,
    MakeStruct,
    MakeVector,
    NewBuilder,
    SugarOp,
    UnaryOp,
)
from weldmill.parser import parse, parse_type_text
from weldmill.printer import print_expr
from weldmill.typecheck import infer
from weldmill.types import BOOL, F32, F64, I32, I64, Scalar, Vec

LISTINGS = [
    "result(for(v0, vecbuilder[i64], (b, i, x) => merge(b, x + 1)))",
    "result(for({v0, v1}, vecbuilder[i64], (b, i, x) => if (x.0 > 1, merge(b, x.0 + x.1), b)))",
    "r := for(data, {vecbuilder[i64], merger[i64, +]}, (bs, i, x) => {merge(bs.0, x + 1), merge(bs.1, x)}); {result(r.0), result(r.1)}",
    "v1 := result(for(v0, vecbuilder[i64], (b, i, x) => if (x > 500000, merge(b, x), b))); result(for(v1, merger[i64, +], (b, i, x) => merge(b, x)))",
    "result(for(v0, merger[i64, +], (b, i, x) => if (x > 500000, merge(b, x), b)))",
    "reduce(filter(v0, (x) => x > 500000), 0, (x, y) => x + y)",
]


class TestLiterals:
    def test_unsuffixed_int_stays_flexible(self):
        # the kind is pinned during inference, defaulting to i64
        e = parse("42")
        assert isinstance(e, Literal) and e.kind is None and e.value == 42
        assert infer(e, {}).ty == Scalar(I64)

    def test_si32_suffix(self):
        e = parse("42si32")
        assert e.kind == I32

    def test_unsuffixed_float_defaults_to_f64(self):
        e = parse("2.5")
        assert e.kind is None and e.value == 2.5
        assert infer(e, {}).ty == Scalar(F64)

    def test_f_suffix_is_f32(self):
        e = parse("2.5f")
        assert e.kind == F32

    def test_scientific_notation(self):
        assert parse("1e3").value == 1000.0
        assert parse("2.5e-1").value == 0.25

    def test_booleans(self):
        assert parse("true").value is True
        assert parse("false").value is False

    def test_negative_literal_folds(self):
        e = parse("-5")
        assert isinstance(e, Literal) and e.value == -5

    def test_si32_on_float_rejected(self):
        with pytest.raises(ParseError):
            parse("1.5si32")


class TestPrecedence:
    def test_mul_binds_tighter(self):
        e = parse("1 + 2 * 3")
        assert isinstance(e, BinaryOp) and e.op == "+"
        assert isinstance(e.rhs, BinaryOp) and e.rhs.op == "*"

    def test_parens_override(self):
        e = parse("(1 + 2) * 3")
        assert e.op == "*" and e.lhs.op == "+"

    def test_left_associative(self):
        e = parse("10 - 4 - 3")
        assert e.op == "-" and isinstance(e.lhs, BinaryOp)

    def test_comparison_below_arithmetic(self):
        e = parse("a + 1 > b * 2")
        assert e.op == ">"

    def test_logical_lowest(self):
        e = parse("a > 1 && b < 2 || c == 3")
        assert e.op == "||"
        assert e.lhs.op == "&&"

    def test_unary_tighter_than_binary(self):
        e = parse("-x + y")
        assert e.op == "+" and isinstance(e.lhs, UnaryOp)

    def test_not(self):
        e = parse("!a && b")
        assert e.op == "&&" and isinstance(e.lhs, UnaryOp)

    def test_python_agrees_on_generated_arithmetic(self):
        # + - * with random grouping, evaluated by Python as the oracle
        rng = random.Random(20260818)
        from weldmill.engine import evaluate
        from weldmill.typecheck import infer

        def gen(depth):
            if depth == 0 or rng.random() < 0.3:
                return str(rng.randint(-9, 9))
            op = rng.choice(["+", "-", "*"])
            left, right = gen(depth - 1), gen(depth - 1)
            text = f"{left} {op} {right}"
            return f"({text})" if rng.random() < 0.4 else text

        for _ in range(200):
            src = gen(4)
            mine = evaluate(infer(parse(src), {}))[0].data
            assert mine == eval(src), src


class TestForms:
    def test_both_if_forms_same_tree(self):
        call = parse("if(c, t, e)")
        keyword = parse("if (c) t else e")
        assert isinstance(call, If) and isinstance(keyword, If)
        assert print_expr(call) == print_expr(keyword)

    def test_let_chain(self):
        e = parse("x := 1; y := 2; x + y")
        assert isinstance(e, Let) and isinstance(e.body, Let)

    def test_lambda_with_annotations(self):
        e = parse("(x: i64, y: vec[f64]) => x")
        assert isinstance(e, Lambda)
        assert e.params[0].ty_ann == Scalar(I64)
        assert e.params[1].ty_ann == Vec(Scalar(F64))

    def test_vector_and_struct_literals(self):
        assert isinstance(parse("[1, 2, 3]"), MakeVector)
        assert isinstance(parse("{1, true}"), MakeStruct)

    def test_builder_with_size_hint(self):
        e = parse("vecbuilder[i64](100)")
        assert isinstance(e, NewBuilder) and e.arg is not None

    def test_merger_shorthand_with_identity(self):
        # merger[+, 0] names the op and its identity instead of the type
        e = parse("result(for(v, merger[+, 0], (b, i, x) => merge(b, x)))")
        loop = e.builder
        assert isinstance(loop, For)
        assert isinstance(loop.builders, NewBuilder)
        assert loop.builders.kind.op == "+"

    def test_field_access_chain(self):
        e = parse("x.0.1")
        assert print_expr(e) == "x.0.1"

    def test_sugar_ops_parse_as_sugar(self):
        for src in ("map(v, (x) => x)", "filter(v, (x) => x > 0)",
                    "reduce(v, 0, (a, b) => a + b)", "zip(v, w)",
                    "flatmap(v, (x) => [x])",
                    "groupby(v, (x) => x, (x) => x)"):
            assert isinstance(parse(src), SugarOp), src

    def test_comments_ignored(self):
        e = parse("1 + 2 // trailing words\n+ 3")
        assert print_expr(e) == "1 + 2 + 3"

    def test_iter_forms(self):
        e = parse("result(for(iter(v, 0, 10, 2), vecbuilder[i64], (b, i, x) => merge(b, x)))")
        spec = e.builder.iters[0]
        assert spec.start is not None and spec.stride is not None
        e2 = parse("for(simditer(v), merger[i64, +], (b, i, x) => merge(b, x))")
        assert e2.iters[0].simd


class TestErrors:
    @pytest.mark.parametrize("src", [
        "", "1 +", "(1", "x :=", "if (a) b", "for := 1; for",
        "{,}", "[1,", "1 2", "() => 1",
    ])
    def test_rejected(self, src):
        with pytest.raises(ParseError):
            parse(src)

    def test_error_carries_span(self):
        try:
            parse("1 + ")
        except ParseError as err:
            assert err.span is not None
        else:
            pytest.fail("expected ParseError")

    def test_depth_limit(self):
        deep = "(" * 500 + "1" + ")" * 500
        with pytest.raises(ParseError):
            parse(deep)

    def test_size_limit(self):
        with pytest.raises(ParseError):
            parse("1 + " * (1 << 18) + "1")

    def test_reserved_words_not_idents(self):
        for word in ("for", "if", "merge", "result", "true", "iter"):
            with pytest.raises(ParseError):
                parse(f"{word} := 1; {word}")


class TestRoundTrip:
    @pytest.mark.parametrize("src", LISTINGS)
    def test_listings_round_trip(self, src):
        text = print_expr(parse(src))
        assert print_expr(parse(text)) == text

    def test_types_round_trip(self):
        for text in ("i64", "vec[{i32, f64}]", "dict[i64, vec[bool]]",
                     "simd[f32]", "merger[f64, min]", "groupbuilder[i64, {i64, i64}]"):
            assert str(parse_type_text(text)) == text


# Hypothesis: random trees print to text that parses back to the same text.

_names = st.sampled_from(["a", "b2", "x_y", "v0"])
_int_lit = st.integers(-(2**62), 2**62).map(lambda v: Literal(v, I64))
_bool_lit = st.booleans().map(lambda v: Literal(v, BOOL))
_float_lit = st.floats(allow_nan=False, allow_infinity=False,
                       min_value=-1e12, max_value=1e12).map(lambda v: Literal(v, F64))
_leaf = st.one_of(_int_lit, _bool_lit, _float_lit, _names.map(Ident))


def _node(children):
    arith = st.tuples(st.sampled_from(["+", "-", "*", "/", "%", "==", "<", "&&", "||"]),
                      children, children).map(lambda t: BinaryOp(t[0], t[1], t[2]))
    negate = children.map(lambda e: UnaryOp("!", e))
    cond = st.tuples(children, children, children).map(lambda t: If(t[0], t[1], t[2]))
    binding = st.tuples(_names, children, children).map(lambda t: Let(t[0], t[1], t[2]))
    from weldmill.expr import Param
    lam = st.tuples(_names, children).map(
        lambda t: Lambda((Param(t[0], None),), t[1]))
    struct = st.lists(children, min_size=1, max_size=3).map(
        lambda xs: MakeStruct(tuple(xs)))
    vector = st.lists(children, min_size=1, max_size=3).map(
        lambda xs: MakeVector(tuple(xs)))
    return st.one_of(arith, negate, cond, binding, lam, struct, vector)


_trees = st.recursive(_leaf, _node, max_leaves=25)


class TestPrintParseFuzz:
    @settings(max_examples=300, deadline=None)
    @given(_trees)
    def test_print_parse_print_fixpoint(self, tree):
        text = print_expr(tree)
        assert print_expr(parse(text)) == text
