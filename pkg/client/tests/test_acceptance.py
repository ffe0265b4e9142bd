"""End-to-end gate for the lazy client against a live runtime.

One test per contract clause, each printing a PASS line with the
observed numbers, mirroring the runtime package's own acceptance suite.
"""

import math
import random

import pytest

from weldclient import LazyArray, TranslationError, default_transport, weld

FLOAT_REL_TOL = 1e-6


def test_lazy_pipeline_evaluates_once():
    transport = default_transport()
    xs = LazyArray([600000, 400000, 700000], transport=transport)
    total = xs.filter(xs > 500000).sum()

    before = transport.eval_count()
    assert not total.evaluated
    assert int(total) == 1300000
    assert transport.eval_count() == before + 1

    assert str(total) == "1300000"
    assert transport.eval_count() == before + 1
    print("\nclient: PASS - filter+sum -> 1300000 in exactly one evaluation")


def test_udf_translation_and_mapping():
    successor = weld("(i64) => i64")(lambda x: x + 1)
    assert successor.text == "(x:i64) => x + 1"
    assert LazyArray([1, 2, 3]).map(successor).to_list() == [2, 3, 4]

    # Squaring as the product of an array with itself: one data leaf,
    # referenced twice by the same fragment.
    xs = LazyArray([2, 3])
    assert xs.mul(xs).to_list() == [4, 9]
    print("client: PASS - @weld translates and maps "
          "([1,2,3] -> [2,3,4], squares [2,3] -> [4,9])")


def test_untranslatable_functions_are_named():
    with pytest.raises(TranslationError, match="print"):
        @weld("(i64) => i64")
        def noisy(x):
            print(x)
            return x

    print("client: PASS - a print call raises TranslationError naming it")


def test_agreement_with_local_reference():
    rng = random.Random(20260818)
    ints = [rng.randint(-1000, 1000) for _ in range(500)]
    xs = LazyArray(ints)
    got = int(xs.add(7).mul(3).filter(xs > 0).sum())
    want = sum((v + 7) * 3 for v in ints if v > 0)
    assert got == want

    floats = [rng.uniform(0.5, 1.5) for _ in range(500)]
    fs = LazyArray(floats, "f64")
    fgot = float(fs.mul(0.125).sum())
    fwant = sum(v * 0.125 for v in floats)
    assert math.isclose(fgot, fwant, rel_tol=FLOAT_REL_TOL)
    print(f"client: PASS - agreement with local reference "
          f"(ints exact: {got}, floats within {FLOAT_REL_TOL:g})")
