"""Runtime state for the five builder kinds.

A builder accumulates merges and is consumed exactly once by result(). To
keep results reproducible while the loop driving the merges runs on several
threads, order-sensitive partial state is keyed by an ordering key the engine
supplies with every merge: a (step, chunk) pair, where the step numbers the
program's parallel sections in execution order and the chunk is the
grain-aligned block of iterations the merge came from. Chunk boundaries
depend only on the loop length and the configured grain, never on timing or
thread count, so folding the partials in ascending key order gives the same
answer on one thread as on eight. Exactly one worker ever writes to a given
key's slot, which is why merges need no per-element locking.

The merger family additionally supports two alternative strategies:

* shared: one accumulator per worker, folded in worker order at result().
  Which elements land on which worker depends on scheduling, so floating
  point results may differ across runs in the last few bits; integer results
  are exact because the fold ops are associative and commutative.
* global: a single accumulator behind a mutex, folded in arrival order.

All three strategies agree exactly for integer programs; tests compare float
results under shared/global with a relative tolerance.
"""

from __future__ import annotations

import threading

from ..errors import EvalError, IndexOutOfBounds, UseAfterResult
from ..types import (
    SCALAR_SIZES,
    SIMD_WIDTH,
    F32,
    FLOAT_KINDS,
    I32,
    Dict,
    DictMerger,
    GroupBuilder,
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

LOCAL = "local"
SHARED = "shared"
GLOBAL = "global"
STRATEGIES = (LOCAL, SHARED, GLOBAL)

_INITIAL_CAPACITY = 16


def payload_bytes(t, data) -> int:
    """Logical footprint of a runtime value, in the packed layout's terms.

    Vectors and dictionaries carry a 16-byte header (length plus indirection)
    on top of their contents. Used both for the memory limit and for the
    post-run live-bytes report.
    """
    if isinstance(t, Scalar):
        return SCALAR_SIZES[t.kind]
    if isinstance(t, Simd):
        return SIMD_WIDTH * SCALAR_SIZES[t.kind]
    if isinstance(t, Struct):
        return sum(payload_bytes(f, v) for f, v in zip(t.fields, data))
    if isinstance(t, Vec):
        fixed = _fixed_size(t.elem)
        if fixed is not None:
            return 16 + len(data) * fixed
        return 16 + sum(payload_bytes(t.elem, v) for v in data)
    if isinstance(t, Dict):
        total = 16
        for k, v in data.items():
            total += 16 + payload_bytes(t.key, k) + payload_bytes(t.value, v)
        return total
    raise EvalError(f"no byte accounting for values of type {t}")


def _fixed_size(t):
    if isinstance(t, Scalar):
        return SCALAR_SIZES[t.kind]
    if isinstance(t, Simd):
        return SIMD_WIDTH * SCALAR_SIZES[t.kind]
    if isinstance(t, Struct):
        total = 0
        for f in t.fields:
            s = _fixed_size(f)
            if s is None:
                return None
            total += s
        return total
    return None


def _slot_size(t) -> int:
    """Per-element bytes for append buffers; variable-size elements count as
    a 16-byte reference, their own contents being accounted where they were
    materialized."""
    s = _fixed_size(t)
    return s if s is not None else 16


def _wrap_int(kind):
    bits = 32 if kind == I32 else 64
    mask = (1 << bits) - 1
    sign = 1 << (bits - 1)

    def wrap(x: int) -> int:
        x &= mask
        return x - (mask + 1) if x & sign else x

    return wrap


def _scalar_fold(op: str, kind: str):
    """A two-argument fold for one merge op over one scalar kind.

    Integer + and * wrap at the type's width. Float min/max use a total
    order where NaN is greater than every number.
    """
    if kind in FLOAT_KINDS:
        rnd = f32_round if kind == F32 else (lambda v: v)
        if op == "+":
            return lambda a, b: rnd(a + b)
        if op == "*":
            return lambda a, b: rnd(a * b)
        if op == "min":

            def fmin(a, b):
                if a != a:  # NaN sorts high, so min prefers the other side
                    return b
                if b != b:
                    return a
                return a if a <= b else b

            return fmin
        if op == "max":

            def fmax(a, b):
                if a != a:
                    return a
                if b != b:
                    return b
                return a if a >= b else b

            return fmax
    else:
        wrap = _wrap_int(kind)
        if op == "+":
            return lambda a, b: wrap(a + b)
        if op == "*":
            return lambda a, b: wrap(a * b)
        if op == "min":
            return lambda a, b: a if a <= b else b
        if op == "max":
            return lambda a, b: a if a >= b else b
    raise EvalError(f"no fold for op {op!r} over {kind}")


def fold_fn(elem, op: str):
    """Fold for a merger element type: scalars directly, structures
    field by field."""
    if isinstance(elem, Scalar):
        return _scalar_fold(op, elem.kind)
    if isinstance(elem, Struct):
        parts = [fold_fn(f, op) for f in elem.fields]
        return lambda a, b: tuple(p(x, y) for p, x, y in zip(parts, a, b))
    raise EvalError(f"merger cannot fold values of type {elem}")


def identity_payload(elem, op: str):
    if isinstance(elem, Scalar):
        return identity_value(op, elem.kind)
    if isinstance(elem, Struct):
        return tuple(identity_payload(f, op) for f in elem.fields)
    raise EvalError(f"merger has no identity over {elem}")


_ABSENT = object()


class BuilderState:
    """Common skeleton: a consumed flag and a lock guarding slot creation."""

    __slots__ = ("kind", "consumed", "owned_bytes", "_lock", "_own_lock", "_host")

    def __init__(self, host, kind):
        self.kind = kind
        self.consumed = False
        self.owned_bytes = 0
        self._lock = threading.Lock()
        # Separate lock for byte accounting: _own is called from paths that
        # may already hold _lock, and workers account concurrently.
        self._own_lock = threading.Lock()
        self._host = host

    def _check(self):
        if self.consumed:
            raise UseAfterResult(f"builder {self.kind} already consumed by result")

    def _own(self, n: int):
        with self._own_lock:
            self.owned_bytes += n
        self._host.alloc(n)

    def _release_owned(self):
        self._host.free(self.owned_bytes)
        self.owned_bytes = 0

    def merge(self, value, key, worker: int):
        raise NotImplementedError

    def result(self):
        raise NotImplementedError


class _Segment:
    __slots__ = ("items", "cap")

    def __init__(self, cap):
        self.items = []
        self.cap = cap


class VecBuilderState(BuilderState):
    """Appends elements; result is the concatenation in iteration order.

    With a size hint the whole buffer is charged up front and never grows;
    without one each segment starts small and doubles, and every doubling
    bumps the reallocation counter.
    """

    __slots__ = ("slots", "elem_bytes", "hinted")

    def __init__(self, host, kind: VecBuilder, size_hint=None):
        super().__init__(host, kind)
        self.slots: dict = {}
        self.elem_bytes = _slot_size(kind.elem)
        self.hinted = size_hint is not None
        if self.hinted:
            if size_hint < 0:
                raise EvalError(f"negative vector size hint {size_hint}")
            self._own(size_hint * self.elem_bytes)

    def _segment(self, key) -> _Segment:
        seg = self.slots.get(key)
        if seg is None:
            with self._lock:
                seg = self.slots.get(key)
                if seg is None:
                    seg = _Segment(None if self.hinted else 0)
                    self.slots[key] = seg
        return seg

    def merge(self, value, key, worker: int):
        self._check()
        seg = self._segment(key)
        items = seg.items
        cap = seg.cap
        if cap is not None and len(items) >= cap:
            new_cap = _INITIAL_CAPACITY if cap == 0 else cap * 2
            self._own((new_cap - cap) * self.elem_bytes)
            if cap:
                self._host.shard().reallocs += 1
            seg.cap = new_cap
        items.append(value)

    def result(self):
        self._check()
        self.consumed = True
        out = []
        for key in sorted(self.slots):
            out.extend(self.slots[key].items)
        self.slots.clear()
        self._release_owned()
        self._host.materialized(out, payload_bytes(Vec(self.kind.elem), out))
        return out


class MergerState(BuilderState):
    """Folds merged values with one commutative op; result is a scalar or a
    structure folded field-wise."""

    __slots__ = ("strategy", "fold", "slots", "shards", "acc")

    def __init__(self, host, kind: Merger, strategy: str):
        super().__init__(host, kind)
        self.strategy = strategy
        self.fold = fold_fn(kind.elem, kind.op)
        self.slots: dict = {}
        if strategy == SHARED:
            self.shards = [_ABSENT] * host.workers
        elif strategy == GLOBAL:
            self.acc = _ABSENT

    def merge(self, value, key, worker: int):
        self._check()
        if self.strategy == LOCAL:
            cur = self.slots.get(key, _ABSENT)
            self.slots[key] = value if cur is _ABSENT else self.fold(cur, value)
        elif self.strategy == SHARED:
            cur = self.shards[worker]
            self.shards[worker] = value if cur is _ABSENT else self.fold(cur, value)
        else:
            with self._lock:
                self.acc = value if self.acc is _ABSENT else self.fold(self.acc, value)

    def result(self):
        self._check()
        self.consumed = True
        if self.strategy == LOCAL:
            partials = [self.slots[k] for k in sorted(self.slots)]
        elif self.strategy == SHARED:
            partials = [p for p in self.shards if p is not _ABSENT]
        else:
            partials = [] if self.acc is _ABSENT else [self.acc]
        acc = identity_payload(self.kind.elem, self.kind.op)
        if partials:
            acc = partials[0]
            for p in partials[1:]:
                acc = self.fold(acc, p)
        return acc


class DictMergerState(BuilderState):
    """Keyed fold: each merge upserts {key, value} with the op."""

    __slots__ = ("strategy", "fold", "slots", "shards", "acc", "entry_overhead")

    def __init__(self, host, kind: DictMerger, strategy: str):
        super().__init__(host, kind)
        self.strategy = strategy
        self.fold = fold_fn(kind.value, kind.op)
        self.slots: dict = {}
        if strategy == SHARED:
            self.shards = [None] * host.workers
        elif strategy == GLOBAL:
            self.acc = {}
        self.entry_overhead = 16 + _slot_size(kind.key) + _slot_size(kind.value)

    def _upsert(self, table, k, v):
        cur = table.get(k, _ABSENT)
        if cur is _ABSENT:
            table[k] = v
            self._own(self.entry_overhead)
        else:
            table[k] = self.fold(cur, v)

    def merge(self, value, key, worker: int):
        self._check()
        k, v = value
        if self.strategy == LOCAL:
            table = self.slots.get(key)
            if table is None:
                with self._lock:
                    table = self.slots.setdefault(key, {})
            self._upsert(table, k, v)
        elif self.strategy == SHARED:
            table = self.shards[worker]
            if table is None:
                table = self.shards[worker] = {}
            self._upsert(table, k, v)
        else:
            with self._lock:
                self._upsert(self.acc, k, v)

    def _partial_tables(self):
        if self.strategy == LOCAL:
            return [self.slots[k] for k in sorted(self.slots)]
        if self.strategy == SHARED:
            return [t for t in self.shards if t]
        return [self.acc]

    def result(self):
        self._check()
        self.consumed = True
        combined: dict = {}
        for table in self._partial_tables():
            for k, v in table.items():
                cur = combined.get(k, _ABSENT)
                combined[k] = v if cur is _ABSENT else self.fold(cur, v)
        final = {k: combined[k] for k in sorted(combined, key=order_key)}
        self._release_owned()
        ty = Dict(self.kind.key, self.kind.value)
        self._host.materialized(final, payload_bytes(ty, final))
        return final


class VecMergerState(BuilderState):
    """Fold-at-index over a private copy of an initial vector."""

    __slots__ = ("strategy", "fold", "slots", "shards", "base", "length")

    def __init__(self, host, kind: VecMerger, strategy: str, init):
        super().__init__(host, kind)
        self.strategy = strategy
        self.fold = fold_fn(kind.elem, kind.op)
        self.base = list(init)
        self.length = len(self.base)
        self._own(self.length * _slot_size(kind.elem))
        self.slots: dict = {}
        if strategy == SHARED:
            self.shards = [None] * host.workers

    def merge(self, value, key, worker: int):
        self._check()
        i, v = value
        if not 0 <= i < self.length:
            raise IndexOutOfBounds(
                f"vecmerger index {i} outside [0, {self.length})"
            )
        if self.strategy == LOCAL:
            table = self.slots.get(key)
            if table is None:
                with self._lock:
                    table = self.slots.setdefault(key, {})
            cur = table.get(i, _ABSENT)
            table[i] = v if cur is _ABSENT else self.fold(cur, v)
        elif self.strategy == SHARED:
            table = self.shards[worker]
            if table is None:
                table = self.shards[worker] = {}
            cur = table.get(i, _ABSENT)
            table[i] = v if cur is _ABSENT else self.fold(cur, v)
        else:
            with self._lock:
                self.base[i] = self.fold(self.base[i], v)

    def result(self):
        self._check()
        self.consumed = True
        out = self.base
        if self.strategy == LOCAL:
            for key in sorted(self.slots):
                for i, v in self.slots[key].items():
                    out[i] = self.fold(out[i], v)
        elif self.strategy == SHARED:
            for table in self.shards:
                if table:
                    for i, v in table.items():
                        out[i] = self.fold(out[i], v)
        self._release_owned()
        self._host.materialized(out, payload_bytes(Vec(self.kind.elem), out))
        return out


class GroupBuilderState(BuilderState):
    """Collects {key, value} merges into per-key vectors, preserving the
    order a single-threaded run would produce."""

    __slots__ = ("slots", "entry_bytes")

    def __init__(self, host, kind: GroupBuilder):
        super().__init__(host, kind)
        self.slots: dict = {}
        self.entry_bytes = _slot_size(kind.value)

    def merge(self, value, key, worker: int):
        self._check()
        k, v = value
        table = self.slots.get(key)
        if table is None:
            with self._lock:
                table = self.slots.setdefault(key, {})
        group = table.get(k)
        if group is None:
            group = table[k] = []
            self._own(16 + _slot_size(self.kind.key))
        group.append(v)
        self._own(self.entry_bytes)

    def result(self):
        self._check()
        self.consumed = True
        combined: dict = {}
        for key in sorted(self.slots):
            for k, group in self.slots[key].items():
                bucket = combined.get(k)
                if bucket is None:
                    combined[k] = list(group)
                else:
                    bucket.extend(group)
        final = {k: combined[k] for k in sorted(combined, key=order_key)}
        self._release_owned()
        ty = Dict(self.kind.key, Vec(self.kind.value))
        self._host.materialized(final, payload_bytes(ty, final))
        return final


def order_key(payload):
    """Sort key giving scalars and structures of scalars a total order.

    Floats order NaN above every number; booleans order below integers of
    the same position only in the trivial False < True sense. Structures
    compare lexicographically.
    """
    if isinstance(payload, float):
        return (payload != payload, payload if payload == payload else 0.0)
    if isinstance(payload, tuple):
        return tuple(order_key(p) for p in payload)
    return (False, payload)


def new_builder_state(host, kind, strategy: str, ctor_arg=None) -> BuilderState:
    """Instantiate runtime state for a builder kind.

    ctor_arg is the vecbuilder size hint or the vecmerger initial vector.
    """
    if isinstance(kind, VecBuilder):
        return VecBuilderState(host, kind, size_hint=ctor_arg)
    if isinstance(kind, Merger):
        return MergerState(host, kind, strategy)
    if isinstance(kind, DictMerger):
        return DictMergerState(host, kind, strategy)
    if isinstance(kind, VecMerger):
        if ctor_arg is None:
            raise EvalError("vecmerger needs an initial vector")
        return VecMergerState(host, kind, strategy, ctor_arg)
    if isinstance(kind, GroupBuilder):
        return GroupBuilderState(host, kind)
    raise EvalError(f"unknown builder kind {kind!r}")
