import pytest

from weldclient import (
    ClientError,
    EvaluationFailed,
    ForeignTransport,
    LazyArray,
    SubprocessTransport,
    encode,
    set_default_transport,
)


@pytest.fixture(scope="module")
def sub():
    return SubprocessTransport()


class TestSubprocessEvaluation:
    def test_filter_sum_end_to_end(self, sub):
        xs = LazyArray([600000, 400000, 700000], transport=sub)
        assert str(xs.filter(xs > 500000).sum()) == "1300000"

    def test_map_udf(self, sub):
        xs = LazyArray([1, 2, 3], transport=sub)
        assert xs.map(lambda v: v * v, "(i64) => i64").to_list() == [1, 4, 9]

    def test_object_type_via_tool(self, sub):
        xs = LazyArray([0.5, 1.5], "f64", transport=sub)
        assert xs.add(1.0).type_text == "vec[f64]"
        assert xs.sum().type_text == "f64"

    def test_eval_count_is_unobservable(self, sub):
        assert sub.eval_count() is None

    def test_evaluate_scalar_leaf_directly(self, sub):
        h = sub.new_data("i64", encode(42, "i64"))
        type_text, data = sub.evaluate(h)
        assert type_text == "i64"
        assert data == encode(42, "i64")


class TestSubprocessGraph:
    def test_shared_node_is_let_bound_once(self, sub):
        a = sub.new_data("vec[i64]", encode([1, 2], "vec[i64]"))
        shared = sub.new_computed([a], "map(v0, (x) => x + 1)")
        root = sub.new_computed(
            [shared, shared], "reduce(v0, 0, (x, y) => x + y) + lookup(v1, 0)"
        )
        program, inputs = sub._assemble(root)
        assert program == (
            "t0 := map(v0, (x) => x + 1); "
            "reduce(t0, 0, (x, y) => x + y) + lookup(t0, 0)"
        )
        assert [name for name, _, _ in inputs] == ["v0"]
        type_text, data = sub.evaluate(root)
        assert (type_text, data) == ("i64", encode(7, "i64"))

    def test_leaves_named_in_first_visit_order(self, sub):
        a = sub.new_data("i64", encode(5, "i64"))
        b = sub.new_data("i64", encode(3, "i64"))
        root = sub.new_computed([b, a], "v0 - v1")
        program, inputs = sub._assemble(root)
        assert program == "v0 - v1"
        assert [(name, ty) for name, ty, _ in inputs] == [("v0", "i64"), ("v1", "i64")]
        assert sub.evaluate(root)[1] == encode(-2, "i64")

    def test_fragment_referencing_missing_dependency(self, sub):
        a = sub.new_data("i64", encode(1, "i64"))
        root = sub.new_computed([a], "v0 + v5")
        with pytest.raises(ClientError, match="v5"):
            sub.evaluate(root)

    def test_freed_handle_is_unknown(self, sub):
        h = sub.new_data("i64", encode(1, "i64"))
        sub.free(h)
        with pytest.raises(ClientError, match="unknown or freed"):
            sub.evaluate(h)
        with pytest.raises(ClientError, match="unknown or freed"):
            sub.new_computed([h], "v0")


class TestSubprocessFailures:
    def test_type_error_at_composition(self, sub):
        xs = LazyArray([1, 2], transport=sub)
        ys = LazyArray([True, False], "bool", transport=sub)
        with pytest.raises(ClientError):
            xs.add(ys)

    def test_runtime_failure_carries_stage(self, sub):
        zs = LazyArray([4, 0], transport=sub)
        halves = zs.map(lambda d: 8 / d, "(i64) => i64")
        with pytest.raises(EvaluationFailed) as exc:
            halves.to_list()
        assert exc.value.stage == "evaluate"
        assert "zero" in exc.value.message

    def test_broken_command_is_reported(self):
        broken = SubprocessTransport(command=["/nonexistent-weldmill-tool"])
        broken.new_data("i64", encode(1, "i64"))
        with pytest.raises((ClientError, OSError)):
            broken.evaluate(1)


class TestTransportParity:
    def test_same_answers_on_both_transports(self, sub):
        values = [600000, 400000, 700000, 123456]
        answers = []
        for transport in (ForeignTransport(), sub):
            xs = LazyArray(values, transport=transport)
            total = xs.filter(xs > 500000).sum()
            doubled = xs.mul(2)
            answers.append((int(total), doubled.to_list()))
        assert answers[0] == answers[1]

    def test_default_transport_override(self, sub):
        set_default_transport(sub)
        try:
            xs = LazyArray([1, 2, 3])
            assert xs._transport is sub
            assert xs.add(1).to_list() == [2, 3, 4]
        finally:
            set_default_transport(None)
