"""Expression tree utilities and the type vocabulary."""

import math

import pytest

from weldmill.errors import WellFormednessError
from weldmill.expr import (
    BinaryOp,
    Ident,
    If,
    Lambda,
    Let,
    Literal,
    MakeStruct,
    Param,
    alpha_normalize,
    count_nodes,
    free_variables,
    fresh_name,
    map_children,
    substitute,
    walk,
    well_formed,
)
from weldmill.parser import parse, parse_type_text
from weldmill.printer import print_expr, print_type
from weldmill.types import (
    BOOL,
    F32,
    F64,
    I32,
    I64,
    Builder,
    Dict,
    DictMerger,
    Function,
    GroupBuilder,
    Merger,
    Scalar,
    Simd,
    Struct,
    Vec,
    VecBuilder,
    VecMerger,
    byte_size,
    f32_round,
    identity_value,
    validate_type,
)


def b(src):
    return parse(src)


class TestTreeBasics:
    def test_children_walk_count(self):
        e = b("1 + 2 * 3")
        assert count_nodes(e) == 5
        kinds = [type(n).__name__ for n in walk(e)]
        assert kinds.count("Literal") == 3
        assert kinds.count("BinaryOp") == 2

    def test_map_children_identity_shape(self):
        e = b("if (x > 0) x else 0 - x")
        rebuilt = map_children(e, lambda c: c)
        assert print_expr(rebuilt) == print_expr(e)

    def test_fresh_names_never_repeat(self):
        names = {fresh_name("q") for _ in range(100)}
        assert len(names) == 100


class TestFreeVariables:
    def test_simple(self):
        assert free_variables(b("x + y")) == {"x", "y"}

    def test_lambda_binds(self):
        assert free_variables(b("(x) => x + y")) == {"y"}

    def test_let_binds_body_not_value(self):
        assert free_variables(b("x := x + 1; x")) == {"x"}

    def test_shadowing(self):
        e = b("(x) => (x := 2; x) + x")
        assert free_variables(e) == set()

    def test_loop_params(self):
        e = b("result(for(v, merger[i64,+], (acc, i, x) => merge(acc, x + c)))")
        assert free_variables(e) == {"v", "c"}


class TestSubstitute:
    def test_replaces_free_occurrences(self):
        e = substitute(b("x + x * y"), {"x": Literal(2, I64)})
        assert print_expr(e) == "2 + 2 * y"

    def test_respects_shadowing(self):
        e = substitute(b("(x) => x + y"), {"x": Literal(1, I64)})
        assert print_expr(e) == "(x) => x + y"

    def test_simultaneous(self):
        # x -> y and y -> x must swap, not chain
        e = substitute(b("x + y"), {"x": Ident("y"), "y": Ident("x")})
        assert print_expr(e) == "y + x"

    def test_capture_avoidance(self):
        # the inserted y must not be captured by the lambda's own y
        e = substitute(b("(y) => x + y"), {"x": Ident("y")})
        lam = e
        assert isinstance(lam, Lambda)
        assert lam.params[0].name != "y"
        assert free_variables(e) == {"y"}

    def test_capture_avoidance_in_let(self):
        e = substitute(b("y := 5; x + y"), {"x": Ident("y")})
        assert free_variables(e) == {"y"}
        # the bound y was renamed, so the free y survives to the use site
        assert isinstance(e, Let) and e.name != "y"


class TestAlphaNormalize:
    def test_renames_binders_canonically(self):
        left = alpha_normalize(b("(a) => a + 1"))
        right = alpha_normalize(b("(z) => z + 1"))
        assert print_expr(left) == print_expr(right)

    def test_distinguishes_structure(self):
        left = alpha_normalize(b("(a) => a + 1"))
        right = alpha_normalize(b("(a) => a + 2"))
        assert print_expr(left) != print_expr(right)

    def test_free_names_kept(self):
        e = alpha_normalize(b("(a) => a + outside"))
        assert "outside" in print_expr(e)

    def test_lets_and_lambdas_share_counter(self):
        e = alpha_normalize(b("q := 1; (r) => q + r"))
        text = print_expr(e)
        assert "_n0" in text and "_n1" in text


class TestWellFormed:
    def test_accepts_listing(self):
        well_formed(b("result(for([1,2,3], merger[i64,+], (b, i, x) => merge(b, x)))"))

    def test_rejects_duplicate_params(self):
        lam = Lambda((Param("x", None), Param("x", None)), Ident("x"))
        with pytest.raises(WellFormednessError):
            well_formed(lam)

    def test_rejects_empty_struct(self):
        with pytest.raises(WellFormednessError):
            well_formed(MakeStruct(()))


class TestTypeVocabulary:
    def test_rendering(self):
        cases = {
            "i64": Scalar(I64),
            "vec[vec[f32]]": Vec(Vec(Scalar(F32))),
            "{i32, bool}": Struct((Scalar(I32), Scalar(BOOL))),
            "dict[i64, f64]": Dict(Scalar(I64), Scalar(F64)),
            "simd[i32]": Simd(I32),
            "merger[i64, +]": Builder(Merger(Scalar(I64), "+")),
            "vecbuilder[i64]": Builder(VecBuilder(Scalar(I64))),
            "dictmerger[i64, i64, max]": Builder(DictMerger(Scalar(I64), Scalar(I64), "max")),
            "vecmerger[f64, +]": Builder(VecMerger(Scalar(F64), "+")),
            "groupbuilder[i32, i64]": Builder(GroupBuilder(Scalar(I32), Scalar(I64))),
        }
        for text, ty in cases.items():
            assert print_type(ty) == text
            assert parse_type_text(text) == ty

    def test_function_type_text(self):
        ty = Function((Scalar(I64), Scalar(I64)), Scalar(BOOL))
        assert print_type(ty) == "(i64, i64) => bool"

    def test_type_equality_is_structural(self):
        assert Vec(Scalar(I64)) == Vec(Scalar(I64))
        assert Vec(Scalar(I64)) != Vec(Scalar(I32))

    def test_validate_rejects_bad_builder_nesting(self):
        with pytest.raises(WellFormednessError):
            validate_type(Builder(Merger(Vec(Scalar(I64)), "+")))

    def test_validate_rejects_unhashable_dict_key(self):
        with pytest.raises(WellFormednessError):
            validate_type(Dict(Vec(Scalar(I64)), Scalar(I64)))


class TestIdentities:
    """Merge identities: the value that leaves any fold unchanged."""

    def test_additive_and_multiplicative(self):
        assert identity_value("+", I64) == 0
        assert identity_value("*", I64) == 1
        assert identity_value("+", F64) == 0.0

    def test_min_max_int_extremes(self):
        assert identity_value("min", I64) == 2**63 - 1
        assert identity_value("max", I64) == -(2**63)
        assert identity_value("min", I32) == 2**31 - 1
        assert identity_value("max", I32) == -(2**31)

    def test_min_max_float_infinities(self):
        assert identity_value("min", F64) == math.inf
        assert identity_value("max", F64) == -math.inf

    def test_identity_really_is_identity(self):
        for op, fold in (("+", lambda a, x: a + x), ("*", lambda a, x: a * x),
                         ("min", min), ("max", max)):
            ident = identity_value(op, I64)
            for x in (-3, 0, 17):
                assert fold(ident, x) == x


class TestByteSize:
    def test_scalars(self):
        assert byte_size(Scalar(BOOL)) == 1
        assert byte_size(Scalar(I32)) == 4
        assert byte_size(Scalar(I64)) == 8
        assert byte_size(Scalar(F32)) == 4
        assert byte_size(Scalar(F64)) == 8

    def test_struct_packs_fields(self):
        assert byte_size(Struct((Scalar(I32), Scalar(BOOL)))) == 5

    def test_vector_counts_header_plus_elements(self):
        assert byte_size(Vec(Scalar(I64)), [1, 2, 3]) == 8 + 3 * 8


class TestF32Rounding:
    def test_round_trips_through_single_precision(self):
        import struct
        for v in (0.1, 1.5, -2.75, 3.14159):
            assert f32_round(v) == struct.unpack("<f", struct.pack("<f", v))[0]

    def test_exact_values_unchanged(self):
        assert f32_round(1.5) == 1.5
        assert f32_round(-0.25) == -0.25
