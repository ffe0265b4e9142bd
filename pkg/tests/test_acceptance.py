"""Acceptance gate: one test per shipping criterion, one verdict line each.

Run with ``pytest -v tests/test_acceptance.py`` to see a pass/fail line per
criterion, or add ``-s`` for the printed summaries. Tolerances: integer
results compare exactly everywhere; float results compare within 1e-5
relative when different pass or thread configurations may reassociate sums.
"""

import random
import time

import pytest

from progen import SEED, corpus
from weldmill.api import (
    evaluate_object,
    free_object,
    new_computed_object,
    new_data_object,
)
from weldmill.boundary import decode_value, encode_value
from weldmill.engine import EngineConfig, Value, evaluate, evaluation_count, payload_bytes
from weldmill.errors import (
    CONSUMED_TWICE,
    LOOP_ESCAPE,
    UNCONSUMED,
    LinearityError,
    MemoryLimitExceeded,
)
from weldmill.expr import For, NewBuilder, alpha_normalize, walk
from weldmill.optim import OptLevel, optimize
from weldmill.parser import parse, parse_type_text
from weldmill.printer import print_expr
from weldmill.sugar import expand
from weldmill.typecheck import check_linearity, infer
from weldmill.types import Merger, VecBuilder

FLOAT_REL_TOL = 1e-5

VI64 = parse_type_text("vec[i64]")

LISTING_BUILD_TWO = (
    "b1 := vecbuilder[i64]; b2 := merge(b1, 5); b3 := merge(b2, 6); result(b3)")
LISTING_LOOP_MERGE = (
    "b1 := vecbuilder[i64];"
    " b2 := for([1, 2, 3], b1, (b, i, x) => merge(b, x + 1));"
    " result(b2)")
LISTING_ZIP_COND = (
    "v0 := [1, 2, 3]; v1 := [4, 5, 6];"
    " result(for({v0, v1}, vecbuilder[i64],"
    " (b, i, x) => if (x.0 > 1, merge(b, x.0 + x.1), b)))")
LISTING_TWO_OPS = """
    data := [1, 2, 3];
    r1 := map(data, (x) => x + 1);
    r2 := reduce(data, 0, (x, y) => x + y);
    {r1, r2}
"""
LISTING_TWO_BUILDERS = """
    data := [1, 2, 3];
    result(for(data, {vecbuilder[i64], merger[i64, +]},
        (bs, i, x) => {merge(bs.0, x + 1), merge(bs.1, x)}))
"""
LISTING_FILTER_SUM = "reduce(filter(v0, (x) => x > 500000), 0, (x, y) => x + y)"
LISTING_FUSED_FILTER_SUM = (
    "result(for(v0, merger[i64, +],"
    " (b, i, x) => if (x > 500000, merge(b, x), b)))")

ALL_LISTINGS = [
    (LISTING_BUILD_TWO, {}),
    (LISTING_LOOP_MERGE, {}),
    (LISTING_ZIP_COND, {}),
    (LISTING_TWO_OPS, {}),
    (LISTING_TWO_BUILDERS, {}),
    (LISTING_FILTER_SUM, {"v0": VI64}),
    (LISTING_FUSED_FILTER_SUM, {"v0": VI64}),
]


def front(src, env=None):
    e = infer(expand(parse(src)), env)
    check_linearity(e)
    return e


def run_data(src, env=None, values=None, config=None, level=None):
    typed = front(src, env)
    opted = optimize(typed, level)[0] if level is not None else typed
    vals = {k: Value(env[k], v) for k, v in (values or {}).items()}
    v, stats = evaluate(opted, vals, config)
    return v.data, stats


def approx_equal(a, b, is_float):
    if isinstance(a, (list, tuple)):
        return (isinstance(b, (list, tuple)) and len(a) == len(b)
                and all(approx_equal(x, y, is_float) for x, y in zip(a, b)))
    if is_float and (isinstance(a, float) or isinstance(b, float)):
        if a != a and b != b:
            return True
        return abs(a - b) <= FLOAT_REL_TOL * max(1.0, abs(a), abs(b))
    return a == b


@pytest.fixture(scope="module")
def programs():
    return corpus()


@pytest.fixture(scope="module")
def prepared(programs):
    """Typed tree, input values, and -O3 form for every corpus program."""
    out = []
    for p in programs:
        env = {k: parse_type_text(t) for k, t in p.inputs.items()}
        typed = front(p.source, env)
        rng = random.Random(hash((SEED, p.name)) & 0xFFFFFFFF)
        inputs = [
            {k: Value(env[k], v) for k, v in p.make_inputs(rng).items()}
            for _ in range(5)
        ]
        out.append((p, typed, inputs))
    return out


def test_criterion_01_listing_fidelity():
    start = time.monotonic()
    assert run_data(LISTING_BUILD_TWO)[0] == [5, 6]
    assert run_data(LISTING_LOOP_MERGE)[0] == [2, 3, 4]
    assert run_data(LISTING_ZIP_COND)[0] == [7, 9]
    assert run_data(LISTING_TWO_BUILDERS)[0] == ([2, 3, 4], 6)
    elapsed = time.monotonic() - start
    assert elapsed < 1.0
    print(f"\ncriterion 1: PASS - listing outputs [5,6] [2,3,4] [7,9] ([2,3,4],6) in {elapsed:.2f}s")


def test_criterion_02_fusion_goldens():
    fused, _ = optimize(front(LISTING_FILTER_SUM, {"v0": VI64}),
                        OptLevel(inline=True, fuse=True, size_analysis=False,
                                 predicate=False, vectorize=False, cse=False))
    target = front(LISTING_FUSED_FILTER_SUM, {"v0": VI64})
    assert print_expr(alpha_normalize(fused)) == print_expr(alpha_normalize(target))
    loops = [n for n in walk(fused) if isinstance(n, For)]
    news = [n for n in walk(fused) if isinstance(n, NewBuilder)]
    assert len(loops) == 1
    assert len(news) == 1 and isinstance(news[0].kind, Merger)
    assert not any(isinstance(n.kind, VecBuilder) for n in news)

    fused2, _ = optimize(front(LISTING_TWO_OPS),
                         OptLevel(inline=True, fuse=True, size_analysis=False,
                                  predicate=False, vectorize=False, cse=False))
    target2 = front(LISTING_TWO_BUILDERS)
    assert print_expr(alpha_normalize(fused2)) == print_expr(alpha_normalize(target2))
    print("\ncriterion 2: PASS - filter+sum fuses to the single-merger loop,"
          " map+reduce fuses to the two-builder loop")


def test_criterion_03_equivalence_oracle(prepared):
    start = time.monotonic()
    levels = [("O0", OptLevel.none()), ("O3", OptLevel.all())]
    levels += [(f"no-{name}", OptLevel.all().disable(name))
               for name in ("inline", "fuse", "size-analysis",
                            "predicate", "vectorize", "cse")]
    assert len(prepared) >= 300
    checked = 0
    for p, typed, inputs in prepared:
        trees = {label: optimize(typed, level)[0] for label, level in levels}
        for env in inputs:
            base = evaluate(trees["O0"], env)[0].data
            for label, tree in trees.items():
                if label == "O0":
                    continue
                got = evaluate(tree, env)[0].data
                assert approx_equal(base, got, p.is_float), (p.name, label)
                checked += 1
    elapsed = time.monotonic() - start
    assert elapsed < 300.0
    print(f"\ncriterion 3: PASS - {len(prepared)} programs x 5 inputs x"
          f" {len(levels)} configs agree ({checked} comparisons, {elapsed:.1f}s)")


def test_criterion_04_parallel_determinism(prepared):
    start = time.monotonic()
    configs = [EngineConfig(threads=t, strategy=s, grain_size=64)
               for t in (1, 2, 4, 8) for s in ("local", "shared", "global")]
    for p, typed, inputs in prepared:
        opted, _ = optimize(typed)
        env = inputs[0]
        base = None
        for cfg in configs:
            got = evaluate(opted, env, cfg)[0].data
            if base is None:
                base = got
            elif p.is_float:
                assert approx_equal(base, got, True), (p.name, cfg)
            else:
                assert got == base, (p.name, cfg)

    rng = random.Random(404)
    big = [rng.randint(0, 10**6) for _ in range(10**6)]
    want = sum(x for x in big if x > 500000)
    fixture = front(LISTING_FILTER_SUM, {"v0": VI64})
    opted, _ = optimize(fixture)
    env = {"v0": Value(VI64, big)}
    for cfg in [EngineConfig(threads=t, strategy=s)
                for t in (1, 2, 4, 8) for s in ("local", "shared", "global")]:
        assert evaluate(opted, env, cfg)[0].data == want, cfg
    elapsed = time.monotonic() - start
    print(f"\ncriterion 4: PASS - corpus and 10^6-row fixture identical across"
          f" 4 thread counts x 3 strategies ({elapsed:.1f}s)")


def test_criterion_05_data_movement_counters():
    env = {"v0": VI64}
    values = {"v0": [600000, 400000, 700000]}
    _, fused = run_data(LISTING_FILTER_SUM, env, values, level=OptLevel.all())
    assert fused.vector_traversals == 1
    assert fused.intermediate_allocations == 0
    _, unfused = run_data(LISTING_FILTER_SUM, env, values,
                          level=OptLevel.all().disable("fuse"))
    assert unfused.vector_traversals == 2
    assert unfused.intermediate_allocations == 1
    print("\ncriterion 5: PASS - fused filter+sum: 1 traversal, 0 intermediates;"
          " fuse disabled: 2 traversals, 1 intermediate")


def test_criterion_06_group_by_and_predicated_sum():
    start = time.monotonic()
    rng = random.Random(1992)
    n = 10**5
    rows = [(rng.randint(0, 3), rng.randint(0, 1), rng.randint(1, 50),
             rng.randint(100, 100000), rng.randint(0, 10))
            for _ in range(n)]
    rows_ty = parse_type_text("vec[{i64, i64, i64, i64, i64}]")

    # group by (flag, status); sum quantity, sum price, sum discounted price
    # (cents times percent), count
    q1 = """
    tovec(result(for(rows,
        dictmerger[{i64, i64}, {i64, i64, i64, i64}, +],
        (b, i, r) => merge(b, {{r.0, r.1},
                               {r.2, r.3, r.3 * (100 - r.4), 1}}))))
    """
    groups = {}
    for flag, status, qty, price, disc in rows:
        acc = groups.setdefault((flag, status), [0, 0, 0, 0])
        acc[0] += qty
        acc[1] += price
        acc[2] += price * (100 - disc)
        acc[3] += 1
    q1_want = sorted((k, tuple(v)) for k, v in groups.items())
    q1_got, _ = run_data(q1, {"rows": rows_ty}, {"rows": rows},
                         level=OptLevel.all())
    assert q1_got == q1_want

    # predicated revenue sum over qty < 24 and 5 <= disc <= 7
    q6 = """
    result(for(rows, merger[i64, +],
        (b, i, r) => if (r.2 < 24 && r.4 >= 5 && r.4 <= 7,
                         merge(b, r.3 * r.4), b)))
    """
    q6_want = sum(price * disc for _, _, qty, price, disc in rows
                  if qty < 24 and 5 <= disc <= 7)
    q6_got, _ = run_data(q6, {"rows": rows_ty}, {"rows": rows},
                         level=OptLevel.all())
    assert q6_got == q6_want
    elapsed = time.monotonic() - start
    assert elapsed < 10.0
    print(f"\ncriterion 6: PASS - 10^5-row group-by (4 aggregates) and"
          f" predicated sum match the sequential reference exactly ({elapsed:.1f}s)")


def test_criterion_07_linearity_suite():
    with pytest.raises(LinearityError) as exc:
        front("b := vecbuilder[i64]; {merge(b, 1), merge(b, 2)}")
    assert exc.value.kind == CONSUMED_TWICE
    with pytest.raises(LinearityError) as exc:
        front("b := vecbuilder[i32]; if (len(v) > 0) result(b) else [1si32]",
              {"v": VI64})
    assert exc.value.kind == UNCONSUMED
    with pytest.raises(LinearityError) as exc:
        front("result(for([1], vecbuilder[i64],"
              " (b, i, x) => merge(vecbuilder[i64], x)))")
    assert exc.value.kind == LOOP_ESCAPE
    for src, env in ALL_LISTINGS:
        front(src, env)  # each listing passes the front end whole
    print("\ncriterion 7: PASS - consumed-twice, unconsumed, and loop-escape"
          " rejected by kind; every listing passes")


def test_criterion_08_memory_contract():
    big = list(range(200000))
    with pytest.raises(MemoryLimitExceeded):
        run_data("map(v0, (x) => x * 2)", {"v0": VI64}, {"v0": big},
                 config=EngineConfig(memory_limit=4096), level=OptLevel.all())

    limit = 64 << 20
    small = list(range(1000))
    val, stats = run_data("map(v0, (x) => x * 2)", {"v0": VI64}, {"v0": small},
                          config=EngineConfig(memory_limit=limit),
                          level=OptLevel.all())
    assert stats.peak_bytes <= limit
    assert stats.live_bytes == payload_bytes(VI64, val)
    print("\ncriterion 8: PASS - over-limit run fails cleanly; peak under the"
          " limit; live bytes equal the result footprint")


def test_criterion_09_api_laziness():
    before = evaluation_count()
    base = new_data_object([600000, 400000, 700000], VI64)
    filt = new_computed_object([base], "filter(v0, (x) => x > 500000)")
    summed = new_computed_object([filt], "reduce(v0, 0, (x, y) => x + y)")
    assert evaluation_count() == before  # building ran nothing

    res = evaluate_object(summed)
    assert evaluation_count() == before + 1
    assert res.value() == 1300000

    free_object(summed)  # freeing the parent leaves children usable
    child_res = evaluate_object(filt)
    assert child_res.value() == [600000, 700000]
    print("\ncriterion 9: PASS - DAG building runs nothing, evaluate runs once,"
          " children outlive a freed parent")


def test_criterion_10_round_trips(programs):
    for p in programs:
        once = print_expr(parse(p.source))
        assert print_expr(parse(once)) == once, p.name

    rng = random.Random(77)
    vv = parse_type_text("vec[vec[i64]]")
    nested_ty = parse_type_text("vec[{i64, vec[f64]}]")
    samples = [
        ([], vv),
        ([[]], vv),
        ([[1, -2, 3], [], [2**62]], vv),
        ([[rng.randint(-10**9, 10**9) for _ in range(rng.randint(0, 6))]
          for _ in range(10)], vv),
        ([(7, [1.5, -0.25]), (-3, [])], nested_ty),
    ]
    for value, ty in samples:
        assert decode_value(encode_value(value, ty), ty) == value
    print(f"\ncriterion 10: PASS - print-parse identity over {len(programs)}"
          " programs; nested boundary values round-trip")
