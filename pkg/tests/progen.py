"""Seeded corpus of small programs for the differential test suites.

Every program here is well typed, linear, and total for the inputs its
generator produces: constant divisors are nonzero, key expressions see
non-negative values, scatter indices stay in range, and zipped inputs share
a length. Integer programs rely on wraparound, so any evaluation order gives
the same bits; float programs are flagged so callers compare with a
tolerance instead of exact equality.
"""

import random
from dataclasses import dataclass, field
from typing import Callable

SEED = 20260818


@dataclass(frozen=True)
class Program:
    name: str
    source: str
    inputs: dict[str, str] = field(default_factory=dict)
    make_inputs: Callable[[random.Random], dict] = lambda rng: {}
    is_float: bool = False


def _ivec(lo, hi, mult=1):
    def gen(rng):
        n = rng.randint(8, 32)
        n -= n % mult or 0
        return [rng.randint(lo, hi) for _ in range(max(n, mult))]
    return gen


def _int_inputs(lo=-1000, hi=1000, names=("v0",), mult=1):
    per = {name: _ivec(lo, hi, mult) for name in names}

    def gen(rng):
        if len(per) > 1:
            n = rng.randint(8, 32)
            return {name: [rng.randint(lo, hi) for _ in range(n)] for name in per}
        return {name: g(rng) for name, g in per.items()}
    return gen


def _float_inputs(lo=-100.0, hi=100.0, names=("v0",)):
    def gen(rng):
        n = rng.randint(8, 32)
        return {name: [round(rng.uniform(lo, hi), 3) for _ in range(n)]
                for name in names}
    return gen


def _lit(c):
    return f"({c})" if c < 0 else str(c)


def corpus() -> list[Program]:
    rng = random.Random(SEED)
    progs: list[Program] = []
    seen = set()

    def add(name, source, inputs=None, gen=None, is_float=False):
        assert name not in seen, name
        seen.add(name)
        progs.append(Program(name, source, inputs or {},
                             gen or (lambda r: {}), is_float))

    ivec = {"v0": "vec[i64]"}
    fvec = {"v0": "vec[f64]"}

    # elementwise maps
    for i in range(12):
        c = rng.randint(-50, 50)
        for op in ("+", "-", "*"):
            add(f"map-{op}-{i}", f"map(v0, (x) => x {op} {_lit(c)})",
                ivec, _int_inputs())
    for i in range(8):
        c = round(rng.uniform(0.5, 9.5), 2)
        for op in ("+", "*", "/"):
            add(f"fmap-{op}-{i}", f"map(v0, (x) => x {op} {c})",
                fvec, _float_inputs(), is_float=True)

    # filters and reductions
    for i in range(16):
        t = rng.randint(-500, 500)
        add(f"filter-{i}", f"filter(v0, (x) => x > {_lit(t)})", ivec, _int_inputs())
    for i in range(8):
        s = rng.randint(0, 100)
        add(f"sum-{i}", f"reduce(v0, {s}, (x, y) => x + y)", ivec, _int_inputs())
    for i in range(4):
        add(f"prod-{i}", "reduce(v0, 1, (x, y) => x * y)",
            ivec, _int_inputs(-9, 9))
    for i in range(4):
        add(f"fsum-{i}", "reduce(v0, 0.0, (x, y) => x + y)",
            fvec, _float_inputs(), is_float=True)
        add(f"fprod-{i}", "reduce(v0, 1.0, (x, y) => x * y)",
            fvec, _float_inputs(0.5, 1.5), is_float=True)

    # pipelines the fusion pass cares about
    for i in range(10):
        t = rng.randint(-300, 300)
        c = rng.randint(1, 20)
        add(f"map-filter-{i}",
            f"map(filter(v0, (x) => x > {_lit(t)}), (y) => y * {c})",
            ivec, _int_inputs())
        add(f"filter-sum-{i}",
            f"reduce(filter(v0, (x) => x > {_lit(t)}), 0, (x, y) => x + y)",
            ivec, _int_inputs())
        add(f"map-map-{i}",
            f"map(map(v0, (x) => x + {c}), (y) => y * {c})",
            ivec, _int_inputs())
    for i in range(6):
        t = rng.randint(-200, 200)
        c = rng.randint(1, 9)
        add(f"deep-pipe-{i}",
            f"reduce(map(filter(map(v0, (a) => a * {c}), (x) => x > {_lit(t)}),"
            f" (y) => y + {c}), 0, (p, q) => p + q)",
            ivec, _int_inputs())

    # explicit loops over every merger op
    for i in range(4):
        for op in ("+", "*", "min", "max"):
            add(f"merger-{op}-{i}",
                f"result(for(v0, merger[i64, {op}], (b, i, x) => merge(b, x)))",
                ivec, _int_inputs(-9, 9) if op == "*" else _int_inputs())
    for i in range(4):
        for op in ("min", "max"):
            add(f"fmerger-{op}-{i}",
                f"result(for(v0, merger[f64, {op}], (b, i, x) => merge(b, x)))",
                fvec, _float_inputs(), is_float=True)

    # conditional merges and scalar branches (predication targets)
    for i in range(10):
        t = rng.randint(-400, 400)
        c = rng.randint(1, 30)
        add(f"cond-merge-{i}",
            f"result(for(v0, merger[i64, +],"
            f" (b, i, x) => if (x > {_lit(t)}, merge(b, x), b)))",
            ivec, _int_inputs())
        add(f"cond-map-{i}",
            f"map(v0, (x) => if (x > {_lit(t)}, x * {c}, x))",
            ivec, _int_inputs())
        add(f"bitselect-map-{i}",
            f"map(v0, (x) => bitselect(x > {_lit(t)}, x + {c}, x - {c}))",
            ivec, _int_inputs())

    # several builders over one vector (grouping targets)
    for i in range(6):
        c = rng.randint(1, 9)
        add(f"two-builder-{i}",
            "result(for(v0, {vecbuilder[i64], merger[i64, +]},"
            f" (bs, i, x) => {{merge(bs.0, x * {c}), merge(bs.1, x)}}))",
            ivec, _int_inputs())
        add(f"let-pair-{i}",
            f"a := reduce(v0, 0, (x, y) => x + y);"
            f" c := reduce(v0, {c}, (x, y) => x * y); {{a, c}}",
            ivec, _int_inputs(-5, 5))
    for i in range(4):
        add(f"let-triple-{i}",
            "a := result(for(v0, merger[i64, +], (b, i, x) => merge(b, x)));"
            " c := result(for(v0, merger[i64, min], (b, i, x) => merge(b, x)));"
            " d := result(for(v0, merger[i64, max], (b, i, x) => merge(b, x)));"
            " {a, c, d}",
            ivec, _int_inputs())

    # keyed builders; inputs stay non-negative so % behaves
    for i in range(8):
        k = rng.randint(2, 17)
        add(f"histogram-{i}",
            f"tovec(result(for(v0, dictmerger[i64, i64, +],"
            f" (b, i, x) => merge(b, {{x % {k}, 1}}))))",
            ivec, _int_inputs(0, 1000))
    for i in range(6):
        k = rng.randint(2, 11)
        add(f"sum-by-key-{i}",
            f"tovec(result(for(v0, dictmerger[i64, i64, +],"
            f" (b, i, x) => merge(b, {{x % {k}, x}}))))",
            ivec, _int_inputs(0, 1000))
    for i in range(6):
        k = rng.randint(2, 6)
        zeros = ", ".join("0" for _ in range(k))
        add(f"scatter-{i}",
            f"result(for(v0, vecmerger[i64, +]([{zeros}]),"
            f" (b, i, x) => merge(b, {{x % {k}, x}})))",
            ivec, _int_inputs(0, 1000))
    for i in range(6):
        k = rng.randint(2, 9)
        add(f"group-{i}",
            f"tovec(result(for(v0, groupbuilder[i64, i64],"
            f" (b, i, x) => merge(b, {{x % {k}, x}}))))",
            ivec, _int_inputs(0, 1000))
    for i in range(4):
        k = rng.randint(2, 9)
        c = rng.randint(1, 9)
        add(f"groupby-{i}",
            f"tovec(groupby(v0, (x) => x % {k}, (x) => x * {c}))",
            ivec, _int_inputs(0, 1000))

    # multiple inputs
    two = {"v0": "vec[i64]", "v1": "vec[i64]"}
    for i in range(6):
        add(f"zip-loop-{i}",
            "result(for({v0, v1}, vecbuilder[i64],"
            " (b, i, x) => merge(b, x.0 * x.1)))",
            two, _int_inputs(names=("v0", "v1")))
    for i in range(4):
        add(f"zip-sugar-{i}",
            "map(zip(v0, v1), (p) => p.0 + p.1)",
            two, _int_inputs(names=("v0", "v1")))
    for i in range(2):
        three = {"v0": "vec[i64]", "v1": "vec[i64]", "v2": "vec[i64]"}
        add(f"zip3-{i}",
            "result(for({v0, v1, v2}, merger[i64, +],"
            " (b, i, x) => merge(b, x.0 + x.1 * x.2)))",
            three, _int_inputs(names=("v0", "v1", "v2")))

    # explicit iteration windows
    for i, stride in enumerate((2, 3, 4)):
        add(f"strided-{i}",
            f"result(for(iter(v0, 0, len(v0), {stride}), vecbuilder[i64],"
            " (b, i, x) => merge(b, x)))",
            ivec, _int_inputs())
        add(f"strided-sum-{i}",
            f"result(for(iter(v0, 1, len(v0), {stride}), merger[i64, +],"
            " (b, i, x) => merge(b, x)))",
            ivec, _int_inputs())
    for i in range(3):
        add(f"bounded-{i}",
            f"result(for(iter(v0, {i}, {i + 5}, 1), vecbuilder[i64],"
            " (b, i, x) => merge(b, x + i)))",
            ivec, _int_inputs())
    add("simd-main-tail",
        "r := for(simditer(v0), merger[i64, +], (b, i, x) => merge(b, x));"
        " n := len(v0) - len(v0) % 4;"
        " result(for(iter(v0, n, len(v0), 1), r, (b, i, x) => merge(b, x)))",
        ivec, _int_inputs())
    add("simd-broadcast",
        "result(for(simditer(v0), vecbuilder[i64],"
        " (b, i, x) => merge(b, x * broadcast(3))))",
        ivec, _int_inputs(mult=4))

    # sorting and reshaping
    for i in range(3):
        k = rng.randint(2, 9)
        add(f"sort-id-{i}", "sort(v0, (x) => x)", ivec, _int_inputs())
        add(f"sort-key-{i}", f"sort(v0, (x) => x % {k})", ivec, _int_inputs(0, 1000))
    for i in range(4):
        c = rng.randint(1, 9)
        add(f"flatmap-{i}",
            f"flatmap(v0, (x) => [x, x + {c}])", ivec, _int_inputs())
    for i in range(3):
        add(f"vec-of-vec-{i}",
            "map(v0, (x) => [x, x * 2])", ivec, _int_inputs())

    # scalar programs: shared subtrees, lets, short loops
    for i in range(6):
        c = rng.randint(2, 40)
        add(f"cse-shape-{i}",
            "(lookup(v0, 0) * lookup(v0, 1)) + (lookup(v0, 0) * lookup(v0, 1))"
            f" + {c}",
            ivec, _int_inputs())
        add(f"let-scalar-{i}",
            f"t := lookup(v0, 0) + {c}; t * t", ivec, _int_inputs())
    for i, n in enumerate((50, 200, 999, 4000)):
        add(f"iterate-{i}", f"iterate(1, (x) => {{x * 2, x * 2 < {n}}})")
    for i in range(4):
        add(f"shape-{i}", "{len(v0), lookup(v0, 0), lookup(v0, len(v0) - 1)}",
            ivec, _int_inputs())

    # float pipelines
    for i in range(6):
        t = round(rng.uniform(-50.0, 50.0), 2)
        tlit = f"({t})" if t < 0 else str(t)
        add(f"ffilter-sum-{i}",
            f"reduce(filter(v0, (x) => x > {tlit}), 0.0, (x, y) => x + y)",
            fvec, _float_inputs(), is_float=True)
        add(f"fcond-map-{i}",
            f"map(v0, (x) => if (x > {tlit}, x * 0.5, x))",
            fvec, _float_inputs(), is_float=True)

    # casts bridging the two worlds
    for i in range(4):
        add(f"cast-sum-{i}",
            "reduce(map(v0, (x) => cast(x, f64)), 0.0, (x, y) => x + y)",
            ivec, _int_inputs(), is_float=True)
        add(f"cast-floor-{i}",
            "map(v0, (x) => cast(x, i64))", fvec, _float_inputs())

    return progs


if __name__ == "__main__":
    programs = corpus()
    print(f"{len(programs)} programs")
    for p in programs[:5]:
        print(f"  {p.name}: {p.source}")
