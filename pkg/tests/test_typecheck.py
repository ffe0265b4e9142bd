"""Type inference and the single-use builder discipline."""

import pytest

from weldmill.errors import (
    CONSUMED_TWICE,
    LOOP_ESCAPE,
    UNCONSUMED,
    LinearityError,
    TypeCheckError,
)
from weldmill.expr import Lambda, walk
from weldmill.parser import parse, parse_type_text
from weldmill.printer import print_type
from weldmill.sugar import expand
from weldmill.typecheck import check_linearity, infer
from weldmill.types import BOOL, F32, F64, I32, I64, Function, Scalar, Simd, Vec

VI64 = parse_type_text("vec[i64]")
VF64 = parse_type_text("vec[f64]")


def typed(src, env=None):
    return infer(expand(parse(src)), env or {})


def ty_of(src, env=None):
    return print_type(typed(src, env).ty)


class TestInference:
    @pytest.mark.parametrize("src,expect", [
        ("1 + 2", "i64"),
        ("1.5 * 2.0", "f64"),
        ("1si32 + 2si32", "i32"),
        ("1.5f", "f32"),
        ("true && false", "bool"),
        ("3 > 2", "bool"),
        ("[1, 2, 3]", "vec[i64]"),
        ("{1, true, 2.0}", "{i64, bool, f64}"),
        ("lookup([1, 2], 0)", "i64"),
        ("len([1.5])", "i64"),
        ("if (true) 1 else 2", "i64"),
        ("(x: i64) => x + 1", "(i64) => i64"),
        ("f := (x: i64) => x + 1; f(3)", "i64"),
        ("sort([3, 1], (x) => x)", "vec[i64]"),
        ("cast(1, f64)", "f64"),
        ("x := 4; x * x", "i64"),
    ])
    def test_scalar_and_shape_goldens(self, src, expect):
        assert ty_of(src) == expect

    def test_listing_two_builder_type(self):
        src = ("r := for(data, {vecbuilder[i64], merger[i64, +]},"
               " (bs, i, x) => {merge(bs.0, x + 1), merge(bs.1, x)});"
               " {result(r.0), result(r.1)}")
        assert ty_of(src, {"data": VI64}) == "{vec[i64], i64}"

    def test_filter_sum_type(self):
        src = "result(for(v0, merger[i64, +], (b, i, x) => if (x > 500000, merge(b, x), b)))"
        assert ty_of(src, {"v0": VI64}) == "i64"

    def test_dict_pipeline_type(self):
        src = "tovec(result(for(v, dictmerger[i64, i64, +], (b, i, x) => merge(b, {x, 1}))))"
        assert ty_of(src, {"v": VI64}) == "vec[{i64, i64}]"

    def test_flexible_literals_adopt_context(self):
        # unsuffixed ints flex across int kinds, floats across float kinds
        assert ty_of("1 + 2si32") == "i32"
        assert ty_of("lookup(v, 0) * 2.0", {"v": VF64}) == "f64"
        assert ty_of("1.5 + 2.0f") == "f32"
        with pytest.raises(TypeCheckError):
            typed("1 * 2.0")

    def test_lambda_params_resolved_from_use(self):
        t = typed("map(v, (x) => x + 1)", {"v": VI64})
        lams = [n for n in walk(t) if isinstance(n, Lambda)]
        assert any(p.ty_ann == Scalar(I64) for lam in lams for p in lam.params)

    def test_loop_index_is_i64(self):
        t = typed("result(for(v, vecbuilder[i64], (b, i, x) => merge(b, i)))",
                  {"v": VI64})
        lam = next(n for n in walk(t) if isinstance(n, Lambda))
        assert lam.params[1].ty_ann == Scalar(I64)

    def test_extern_function_types(self):
        env = {"hypot2": Function((Scalar(F64), Scalar(F64)), Scalar(F64))}
        assert ty_of("call(hypot2, 3.0, 4.0)", env) == "f64"

    def test_cast_follows_operand_width(self):
        assert ty_of("cast(3, f64)") == "f64"
        t = ty_of(
            "result(for(simditer(v), vecbuilder[f64], (b, i, x) => merge(b, cast(x, f64))))",
            {"v": parse_type_text("vec[i64]")})
        assert t == "vec[f64]"

    def test_simd_comparison_yields_simd_bool(self):
        src = ("result(for(simditer(v), merger[i64, +], (b, i, x) =>"
               " merge(b, bitselect(x > broadcast(0), x, broadcast(0)))))")
        t = typed(src, {"v": VI64})
        comparisons = [n for n in walk(t)
                       if getattr(n, "op", None) == ">" and n.ty is not None]
        assert Simd(BOOL) in {c.ty for c in comparisons}

    def test_every_node_gets_a_type(self):
        t = typed("reduce(filter(v, (x) => x > 2), 0, (a, b) => a + b)", {"v": VI64})
        for n in walk(t):
            assert n.ty is not None, n


class TestInferenceErrors:
    @pytest.mark.parametrize("src", [
        "1 + true",
        "1 + 1.5",
        "if (1) 2 else 3",
        "if (true) 1 else 1.5",
        "lookup(3, 0)",
        "[1, true]",
        "x.0",
        "merge(vecbuilder[i64], true)",
        "(x) => x",  # no constraint ever pins x
        "undefined_name + 1",
        "f := (x: i64) => x; f(true)",
        "result(for(v, merger[i64, +], (b, i, x) => merge(b, 1.5)))",
    ])
    def test_rejected(self, src):
        with pytest.raises(TypeCheckError):
            typed(src, {"v": VI64})

    def test_mismatch_reports_span(self):
        try:
            typed("1 + true")
        except TypeCheckError as err:
            assert err.span is not None

    def test_monomorphic_lets(self):
        # one binding, one type: a let-bound lambda is not a type scheme
        with pytest.raises(TypeCheckError):
            typed("id := (x) => x; {id(1), id(true)}")


class TestLinearity:
    def test_consumed_twice(self):
        t = typed("b := vecbuilder[i64]; {merge(b, 1), merge(b, 2)}")
        with pytest.raises(LinearityError) as exc:
            check_linearity(t)
        assert exc.value.kind == CONSUMED_TWICE

    def test_unconsumed_on_path(self):
        t = typed("b := vecbuilder[i32]; if (len(v) > 0) result(b) else [1si32]",
                  {"v": VI64})
        with pytest.raises(LinearityError) as exc:
            check_linearity(t)
        assert exc.value.kind == UNCONSUMED

    def test_loop_body_escape(self):
        t = typed("result(for(v, vecbuilder[i64], (b, i, x) => merge(vecbuilder[i64], x)))",
                  {"v": VI64})
        with pytest.raises(LinearityError) as exc:
            check_linearity(t)
        assert exc.value.kind == LOOP_ESCAPE

    def test_lambda_capture_counts_as_consumption(self):
        t = typed("b := vecbuilder[i64]; (x: i64) => merge(b, x)")
        with pytest.raises(LinearityError):
            check_linearity(t)

    def test_both_if_arms_consuming_is_fine(self):
        t = typed("b := vecbuilder[i64]; result(if (len(v) > 0) merge(b, 1) else b)",
                  {"v": VI64})
        check_linearity(t)

    def test_struct_of_builders_consumed_fieldwise(self):
        src = ("r := for(v, {vecbuilder[i64], merger[i64, +]},"
               " (bs, i, x) => {merge(bs.0, x), merge(bs.1, x)});"
               " {result(r.0), result(r.1)}")
        check_linearity(typed(src, {"v": VI64}))

    def test_same_field_twice_rejected(self):
        src = ("r := for(v, {vecbuilder[i64], merger[i64, +]},"
               " (bs, i, x) => {merge(bs.0, x), merge(bs.1, x)});"
               " {result(r.0), result(r.0)}")
        with pytest.raises(LinearityError) as exc:
            check_linearity(typed(src, {"v": VI64}))
        assert exc.value.kind == CONSUMED_TWICE

    @pytest.mark.parametrize("src,env", [
        ("result(for(v0, vecbuilder[i64], (b, i, x) => merge(b, x + 1)))", {"v0": VI64}),
        ("result(for({v0, v1}, vecbuilder[i64], (b, i, x) => if (x.0 > 1, merge(b, x.0 + x.1), b)))",
         {"v0": VI64, "v1": VI64}),
        ("r := for(data, {vecbuilder[i64], merger[i64, +]}, (bs, i, x) =>"
         " {merge(bs.0, x + 1), merge(bs.1, x)}); {result(r.0), result(r.1)}",
         {"data": VI64}),
        ("v1 := result(for(v0, vecbuilder[i64], (b, i, x) => if (x > 500000, merge(b, x), b)));"
         " result(for(v1, merger[i64, +], (b, i, x) => merge(b, x)))", {"v0": VI64}),
        ("result(for(v0, merger[i64, +], (b, i, x) => if (x > 500000, merge(b, x), b)))",
         {"v0": VI64}),
        ("reduce(filter(v0, (x) => x > 500000), 0, (x, y) => x + y)", {"v0": VI64}),
    ])
    def test_all_listings_pass(self, src, env):
        check_linearity(typed(src, env))
