"""Optimizer passes: rewrites land, values are preserved, reports are honest.

Each transformation test also runs both versions of the program under the
engine and compares values, so a rewrite can only pass if it is meaning
preserving.
"""

import pytest

from weldmill.engine import EngineConfig, Value, evaluate
from weldmill.errors import OptimizeError, RewriteBudgetExceeded
from weldmill.expr import For, MakeStruct, NewBuilder, alpha_normalize, walk
from weldmill.optim import OptLevel, optimize, render_reports
from weldmill.parser import parse, parse_type_text
from weldmill.printer import print_expr
from weldmill.sugar import expand
from weldmill.typecheck import check_linearity, infer
from weldmill.types import Merger, VecBuilder

VI64 = parse_type_text("vec[i64]")
VF64 = parse_type_text("vec[f64]")
I64 = parse_type_text("i64")

FUSE_ONLY = OptLevel(inline=True, fuse=True, size_analysis=False,
                     predicate=False, vectorize=False, cse=False)


def front(src, env=None):
    e = infer(expand(parse(src)), env)
    check_linearity(e)
    return e


def only(level_name):
    flags = {f: f == level_name for f in
             ("inline", "fuse", "size_analysis", "predicate", "vectorize", "cse")}
    return OptLevel(**flags)


def run(e, env=None, **cfg):
    v, stats = evaluate(e, env, EngineConfig(**cfg) if cfg else None)
    return v.data, stats


def norm(e):
    return print_expr(alpha_normalize(e))


def report(reports, name):
    return next(r for r in reports if r.name == name)


class TestFusion:
    def test_filter_reduce_becomes_single_merger_loop(self):
        src = front("reduce(filter(v0, (x) => x > 500000), 0, (x, y) => x + y)", {"v0": VI64})
        fused, _ = optimize(src, FUSE_ONLY)
        target = front(
            "result(for(v0, merger[i64,+], (b, i, x) => if (x > 500000, merge(b, x), b)))",
            {"v0": VI64})
        assert norm(fused) == norm(target)
        news = [n for n in walk(fused) if isinstance(n, NewBuilder)]
        assert len([n for n in walk(fused) if isinstance(n, For)]) == 1
        assert len(news) == 1 and isinstance(news[0].kind, Merger)

        env = {"v0": Value(VI64, [3, 700000, 1, 900000])}
        assert run(src, env)[0] == run(fused, env)[0] == 1600000

    def test_filter_reduce_survives_full_pipeline(self):
        src = front("reduce(filter(v0, (x) => x > 500000), 0, (x, y) => x + y)", {"v0": VI64})
        opt, _ = optimize(src)
        news = [n for n in walk(opt) if isinstance(n, NewBuilder)]
        assert all(isinstance(n.kind, Merger) for n in news)
        assert not any(isinstance(n.kind, VecBuilder) for n in news)
        env = {"v0": Value(VI64, [3, 700000, 1, 900000])}
        assert run(opt, env)[0] == 1600000

    def test_two_loops_one_vector_share_a_pass(self):
        src = front(
            """
            data := [1, 2, 3];
            r1 := map(data, (x) => x + 1);
            r2 := reduce(data, 0, (x, y) => x + y);
            {r1, r2}
            """)
        fused, _ = optimize(src, FUSE_ONLY)
        target = front(
            """
            data := [1, 2, 3];
            result(for(data, {vecbuilder[i64], merger[i64,+]},
                (bs, i, x) => {merge(bs.0, x + 1), merge(bs.1, x)}))
            """)
        assert norm(fused) == norm(target)
        assert run(fused)[0] == ([2, 3, 4], 6)
        assert run(optimize(src)[0])[0] == ([2, 3, 4], 6)

    def test_map_of_map_composes(self):
        src = front("map(map(v, (x) => x + 1), (y) => y * 2)", {"v": VI64})
        fused, _ = optimize(src, FUSE_ONLY)
        assert sum(1 for n in walk(fused) if isinstance(n, For)) == 1
        env = {"v": Value(VI64, [1, 2, 3])}
        assert run(fused, env)[0] == run(src, env)[0] == [4, 6, 8]

    def test_three_loops_group_into_one(self):
        src = front(
            """
            a := result(for(v, merger[i64,+], (b, i, x) => merge(b, x)));
            c := result(for(v, merger[i64,*], (b, i, x) => merge(b, x)));
            d := result(for(v, merger[i64,max], (b, i, x) => merge(b, x)));
            {a, c, d}
            """,
            {"v": VI64})
        fused, _ = optimize(src, FUSE_ONLY)
        loops = [n for n in walk(fused) if isinstance(n, For)]
        assert len(loops) == 1
        assert isinstance(loops[0].builders, MakeStruct)
        assert len(loops[0].builders.items) == 3
        env = {"v": Value(VI64, [2, 3, 4])}
        assert run(fused, env)[0] == run(src, env)[0] == (9, 24, 4)

    def test_loops_over_different_vectors_stay_apart(self):
        src = front(
            """
            a := result(for(v, merger[i64,+], (b, i, x) => merge(b, x)));
            c := result(for(w, merger[i64,+], (b, i, x) => merge(b, x)));
            {a, c}
            """,
            {"v": VI64, "w": VI64})
        fused, _ = optimize(src, FUSE_ONLY)
        assert sum(1 for n in walk(fused) if isinstance(n, For)) == 2

    def test_sort_blocks_fusion_but_values_hold(self):
        src = front("map(sort(v, (x) => x), (y) => y * 2)", {"v": VI64})
        fused, _ = optimize(src, FUSE_ONLY)
        assert run(fused, {"v": Value(VI64, [3, 1, 2])})[0] == [2, 4, 6]


class TestSizeAnalysis:
    def test_map_loop_gets_input_length_hint(self):
        src = front("map(v, (x) => x * 2)", {"v": VI64})
        opt, rep = optimize(src, OptLevel(inline=True, fuse=True, size_analysis=True,
                                          predicate=False, vectorize=False, cse=False))
        assert report(rep, "size-analysis").sizes == ("len(v)",)
        big = {"v": Value(VI64, list(range(100000)))}
        assert run(opt, big)[1].vecbuilder_reallocations == 0
        assert run(src, big)[1].vecbuilder_reallocations > 0

    def test_strided_loop_hint_counts_steps(self):
        src = front(
            "result(for(iter(v, 0, len(v), 2), vecbuilder[i64], (b, i, x) => merge(b, x)))",
            {"v": VI64})
        opt, rep = optimize(src, only("size_analysis"))
        assert report(rep, "size-analysis").sizes
        big = {"v": Value(VI64, list(range(100000)))}
        assert run(opt, big)[1].vecbuilder_reallocations == 0
        assert run(opt, {"v": Value(VI64, [10, 20, 30, 40, 50])})[0] == [10, 30, 50]

    def test_filter_output_size_is_unknown(self):
        src = front("filter(v, (x) => x > 2)", {"v": VI64})
        _, rep = optimize(src, OptLevel(inline=True, fuse=True, size_analysis=True,
                                        predicate=False, vectorize=False, cse=False))
        assert report(rep, "size-analysis").sizes == ()


class TestPredication:
    ENV = {"v": Value(parse_type_text("vec[i64]"), [1, 2, 3, 4, 5])}

    def test_conditional_merge_into_merger(self):
        src = front("result(for(v, merger[i64,+], (b, i, x) => if (x > 2, merge(b, x), b)))",
                    {"v": VI64})
        opt, _ = optimize(src, only("predicate"))
        assert "bitselect" in print_expr(opt)
        assert run(opt, self.ENV)[0] == run(src, self.ENV)[0] == 12

    def test_flipped_arms(self):
        src = front("result(for(v, merger[i64,+], (b, i, x) => if (x > 2, b, merge(b, x))))",
                    {"v": VI64})
        opt, _ = optimize(src, only("predicate"))
        assert "bitselect" in print_expr(opt)
        assert run(opt, self.ENV)[0] == run(src, self.ENV)[0] == 3

    def test_vecbuilder_merge_is_not_predicated(self):
        src = front("filter(v, (x) => x > 2)", {"v": VI64})
        opt, _ = optimize(src, only("predicate"))
        assert "bitselect" not in print_expr(opt)

    def test_scalar_branch_becomes_select(self):
        src = front("map(v, (x) => if (x > 2, x * 10, x))", {"v": VI64})
        opt, _ = optimize(src, only("predicate"))
        assert "bitselect" in print_expr(opt)
        assert run(opt, self.ENV)[0] == run(src, self.ENV)[0] == [1, 2, 30, 40, 50]

    def test_faulting_arm_stays_a_branch(self):
        src = front("map(v, (x) => if (x > 0, 100 / x, 0))", {"v": VI64})
        opt, _ = optimize(src, only("predicate"))
        assert "bitselect" not in print_expr(opt)
        assert run(opt, {"v": Value(VI64, [0, 2, 5])})[0] == [0, 50, 20]


class TestVectorize:
    def test_merger_sum_splits_into_simd_and_tail(self):
        src = front("result(for(v, merger[i64,+], (b, i, x) => merge(b, x)))", {"v": VI64})
        opt, rep = optimize(src, only("vectorize"))
        assert report(rep, "vectorize").vectorized == 1
        assert "simditer" in print_expr(opt)
        data = list(range(10003))
        env = {"v": Value(VI64, data)}
        assert run(opt, env)[0] == run(src, env)[0] == sum(data)

    def test_predicated_loop_vectorizes_at_o3(self):
        src = front(
            "result(for(v0, merger[i64,+], (b, i, x) => if (x > 500000, merge(b, x), b)))",
            {"v0": VI64})
        opt, rep = optimize(src)
        assert report(rep, "vectorize").vectorized == 1
        data = [i * 7919 % 1000001 for i in range(10007)]
        env = {"v0": Value(VI64, data)}
        assert run(opt, env)[0] == run(src, env)[0] == sum(x for x in data if x > 500000)

    def test_dict_lookup_in_body_disqualifies(self):
        src = front(
            "m := result(for(v, dictmerger[i64,i64,+], (b, i, x) => merge(b, {x, 1})));"
            "result(for(v, merger[i64,+], (b, i, x) => merge(b, lookup(m, x))))",
            {"v": VI64})
        opt, rep = optimize(src, only("vectorize"))
        assert report(rep, "vectorize").vectorized == 0
        assert "simditer" not in print_expr(opt)

    def test_float_sum_matches_scalar_lane_order(self):
        src = front("result(for(v, merger[f64,+], (b, i, x) => merge(b, x)))", {"v": VF64})
        opt, _ = optimize(src)
        data = [(i % 97) * 0.125 for i in range(1003)]
        env = {"v": Value(VF64, data)}
        assert run(opt, env)[0] == run(src, env)[0]


class TestCommonSubexpressions:
    def test_repeated_product_bound_once(self):
        src = front("(a * b) + (a * b)", {"a": I64, "b": I64})
        opt, rep = optimize(src, only("cse"))
        assert report(rep, "cse").rewrites == 1
        env = {"a": Value(I64, 6), "b": Value(I64, 7)}
        assert run(opt, env)[0] == 84
        assert norm(opt).count("a * b") == 1

    def test_shared_subtree_evaluated_once(self):
        src = front("(lookup(v, 0) * lookup(v, 0)) + (lookup(v, 0) * lookup(v, 0))",
                    {"v": VI64})
        opt, _ = optimize(src, only("cse"))
        env = {"v": Value(VI64, [9])}
        key = "lookup(v, 0) * lookup(v, 0)"
        _, before = evaluate(src, env, EngineConfig(count_evals=True))
        _, after = evaluate(opt, env, EngineConfig(count_evals=True))
        assert before.node_evals.get(key) == 2
        assert after.node_evals.get(key) == 1

    def test_merges_never_shared(self):
        src = front("result(for(v, merger[i64,+], (b, i, x) => merge(merge(b, x), x)))",
                    {"v": VI64})
        _, rep = optimize(src, only("cse"))
        assert report(rep, "cse").rewrites == 0


class TestInline:
    def test_direct_application(self):
        src = front("((x) => x + 1)(2)")
        opt, _ = optimize(src, only("inline"))
        assert norm(opt) == "2 + 1"

    def test_multiply_used_let_stays_bound(self):
        src = front("x := lookup(v, 0); x + x", {"v": VI64})
        opt, _ = optimize(src, only("inline"))
        assert print_expr(opt).count("lookup") == 1


class TestPipeline:
    def test_already_optimal_program_reports_zero_rewrites(self):
        src = front(
            "result(for(v0, merger[i64,+],"
            " (b, i, x) => merge(b, bitselect(x > 500000, x, 0))))",
            {"v0": VI64})
        opt, rep = optimize(src, FUSE_ONLY)
        assert all(r.rewrites == 0 for r in rep)
        assert norm(opt) == norm(src)

    def test_budget_trips_on_tiny_allowance(self):
        src = front(
            """
            data := [1, 2, 3];
            r1 := map(data, (x) => x + 1);
            r2 := reduce(data, 0, (x, y) => x + y);
            {r1, r2}
            """)
        with pytest.raises(RewriteBudgetExceeded) as exc:
            optimize(src, FUSE_ONLY, budget=1)
        assert exc.value.pass_name in ("inline", "fuse")

    def test_untyped_tree_rejected(self):
        with pytest.raises(OptimizeError):
            optimize(expand(parse("1 + 2")))

    def test_disabled_pipeline_is_identity_but_still_reports(self):
        src = front("map(v, (x) => x + 1)", {"v": VI64})
        opt, rep = optimize(src, OptLevel.none())
        assert norm(opt) == norm(src)
        assert all(r.rewrites == 0 for r in rep)
        assert [r.name for r in rep] == [
            "inline", "fuse", "size-analysis", "loop-tiling",
            "predicate", "vectorize", "cse"]

    def test_report_rendering_mentions_loop_counts(self):
        src = front("reduce(filter(v, (x) => x > 0), 0, (x, y) => x + y)", {"v": VI64})
        _, rep = optimize(src)
        text = render_reports(rep)
        assert "pass fuse:" in text
        assert "loops=2->1" in text

    def test_single_pass_disable_flag(self):
        level = OptLevel.all().disable("fuse")
        assert level.fuse is False
        assert level.inline is True
        src = front("reduce(filter(v, (x) => x > 0), 0, (x, y) => x + y)", {"v": VI64})
        opt, _ = optimize(src, level)
        assert sum(1 for n in walk(opt) if isinstance(n, For)) == 2

    def test_optimized_tree_is_fully_typed(self):
        src = front("reduce(filter(v, (x) => x > 500000), 0, (x, y) => x + y)", {"v": VI64})
        opt, _ = optimize(src)
        assert all(n.ty is not None for n in walk(opt))
