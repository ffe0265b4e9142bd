"""Expression evaluation over runtime values.

The evaluator compiles a type-checked expression tree into a network of
Python closures (one per node, names resolved to frame slots up front), then
runs it. Loops execute in parallel over a per-call worker pool.

Determinism contract
--------------------
A program's result is identical for every thread count and, for integer
programs, for every merge strategy. The mechanism: the iteration space of
the outermost multi-iteration loop is partitioned on a fixed grain-aligned
chunk grid, and all order-sensitive builder state is keyed by (step, chunk),
where the step numbers parallel sections in program order. Scheduling decides
who runs a chunk, never where its boundaries are, so folds associate the same
way no matter how the work was stolen. Loops nested inside a parallel section
run sequentially within their chunk and inherit its ordering key.

Numeric semantics
-----------------
Integer arithmetic wraps at the type's width; division truncates toward zero
and raises DivideByZero on a zero divisor. f32 arithmetic rounds every
intermediate through 32-bit precision. Float division by zero follows IEEE
(infinities and NaN rather than an error). Comparisons on NaN are false;
min, max, and sort instead use a total order that places NaN above every
number. Casting a float to an integer truncates toward zero, saturates at
the target bounds for infinities, and maps NaN to 0.
"""

from __future__ import annotations

import math
import threading
import time
from collections import deque
from dataclasses import dataclass, field as dc_field

from ..errors import (
    DivideByZero,
    EvalError,
    ExternCallUnknown,
    IndexOutOfBounds,
    IterationLimit,
    KeyNotFound,
    MemoryLimitExceeded,
    ZipLengthMismatch,
)
from ..expr import (
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
    Result,
    Sort,
    ToVec,
    UnaryOp,
)
from ..printer import print_expr
from ..types import (
    BOOL,
    F32,
    F64,
    FLOAT_KINDS,
    I32,
    INT_KINDS,
    SIMD_WIDTH,
    Builder,
    Dict,
    DictMerger,
    GroupBuilder,
    Merger,
    Scalar,
    Simd,
    Vec,
    VecBuilder,
    VecMerger,
    f32_round,
)
from .builders import (
    GLOBAL,
    LOCAL,
    SHARED,
    STRATEGIES,
    BuilderState,
    fold_fn,
    new_builder_state,
    order_key,
    payload_bytes,
)
from .stats import EvalStats, note_evaluation

W = SIMD_WIDTH


@dataclass
class EngineConfig:
    """Knobs for one evaluation.

    grain_size is the minimum task split, in iterations, and also the chunk
    width of the deterministic ordering grid. count_evals enables per-node
    execution counting (costs a dict bump per node execution, so it is off
    by default).
    """

    threads: int = 1
    memory_limit: int = 1 << 30
    strategy: str = LOCAL
    grain_size: int = 1024
    max_iterations: int = 2**32
    count_evals: bool = False


@dataclass(frozen=True)
class Value:
    """A runtime value paired with its type.

    Payload representation: bool/int/float for scalars, tuples for structures
    and for simd lanes, lists for vectors, dicts for dictionaries.
    """

    ty: object
    data: object


@dataclass
class TaskRange:
    """A contiguous block of loop iterations owned by one worker."""

    loop_id: int
    start: int
    end: int
    ordinal: int


class Closure:
    __slots__ = ("fn", "nparams", "frame")

    def __init__(self, fn, nparams, frame):
        self.fn = fn
        self.nparams = nparams
        self.frame = frame

    def call(self, args):
        if len(args) != self.nparams:
            raise EvalError(
                f"function takes {self.nparams} arguments, got {len(args)}"
            )
        frame = [self.frame]
        frame.extend(args)
        return self.fn(frame)


class _Shard:
    """Per-worker counters, merged into EvalStats at the end."""

    __slots__ = ("traversals", "allocs", "reallocs", "tasks_created",
                 "tasks_stolen", "node_counts")

    def __init__(self):
        self.traversals = 0
        self.allocs = 0
        self.reallocs = 0
        self.tasks_created = 0
        self.tasks_stolen = 0
        self.node_counts = None


class _Runtime:
    """Shared services: byte accounting, counters, scheduling state."""

    def __init__(self, cfg: EngineConfig, externs):
        self.cfg = cfg
        self.externs = externs
        self.workers = cfg.threads
        self.limit = cfg.memory_limit
        self.live = 0
        self.peak = 0
        self.registry = []  # (payload object, accounted bytes)
        self._mem_lock = threading.Lock()
        self._err_lock = threading.Lock()
        self.error = None
        self.shards = [_Shard() for _ in range(cfg.threads)]
        self.tl = threading.local()
        self.tl.worker = 0
        self.tl.chunk = 0
        self.step = 0
        self.parallel_active = False
        self.pool = None
        self.counting = cfg.count_evals
        self.node_prints = []

    def alloc(self, n: int):
        with self._mem_lock:
            self.live += n
            if self.live > self.peak:
                self.peak = self.live
            over = self.live > self.limit
            used = self.live
        if over:
            raise MemoryLimitExceeded(
                f"engine memory {used} bytes exceeds limit {self.limit}"
            )

    def free(self, n: int):
        with self._mem_lock:
            self.live -= n

    def materialized(self, obj, nbytes: int):
        self.alloc(nbytes)
        with self._mem_lock:
            self.registry.append((obj, nbytes))
        self.shard().allocs += 1

    def shard(self) -> _Shard:
        return self.shards[getattr(self.tl, "worker", 0)]

    def fail(self, exc: BaseException):
        with self._err_lock:
            if self.error is None:
                self.error = exc

    def finalize_counting(self):
        if self.counting:
            n = len(self.node_prints)
            for shard in self.shards:
                shard.node_counts = [0] * n


class _LoopCtx:
    """Bookkeeping for one parallel loop run on the pool."""

    __slots__ = ("loop_id", "remaining", "grain", "run_chunk", "done",
                 "active", "lock")

    def __init__(self, loop_id, total, grain, run_chunk):
        self.loop_id = loop_id
        self.remaining = total
        self.grain = grain
        self.run_chunk = run_chunk
        self.done = threading.Event()
        self.active = 0
        self.lock = threading.Lock()


class _Pool:
    """Work-stealing scheduler over one evaluation's worker threads.

    Each worker owns a deque: it pushes and pops at the right end, thieves
    take from the left, so steals grab the largest outstanding range. A busy
    worker splits the remainder of its current task at a chunk-aligned
    midpoint whenever somebody is idle and more than one grain remains.
    """

    def __init__(self, rt: _Runtime):
        self.rt = rt
        self.n = rt.cfg.threads
        self.deques = [deque() for _ in range(self.n)]
        self.dlocks = [threading.Lock() for _ in range(self.n)]
        self.cv = threading.Condition()
        self.idle = 0
        self.stopping = False
        self.ctx: _LoopCtx | None = None
        self.threads = [
            threading.Thread(target=self._worker, args=(i,), daemon=True)
            for i in range(1, self.n)
        ]
        for t in self.threads:
            t.start()

    def shutdown(self):
        with self.cv:
            self.stopping = True
            self.cv.notify_all()
        for t in self.threads:
            t.join()

    def run_loop(self, ctx: _LoopCtx, root: TaskRange):
        self.ctx = ctx
        with self.dlocks[0]:
            self.deques[0].append(root)
        self.rt.shard().tasks_created += 1
        with self.cv:
            self.cv.notify_all()
        # The caller works too, until every iteration is accounted for.
        while not ctx.done.is_set():
            task = self._find_task(0)
            if task is None:
                ctx.done.wait(0.0005)
            else:
                self._execute(task, 0)
        for i in range(self.n):
            with self.dlocks[i]:
                self.deques[i].clear()
        while True:
            with ctx.lock:
                if ctx.active == 0:
                    break
            time.sleep(0.0002)
        self.ctx = None

    def _find_task(self, wid: int):
        with self.dlocks[wid]:
            if self.deques[wid]:
                return self.deques[wid].pop()
        for off in range(1, self.n):
            victim = (wid + off) % self.n
            with self.dlocks[victim]:
                if self.deques[victim]:
                    task = self.deques[victim].popleft()
                    self.rt.shards[wid].tasks_stolen += 1
                    return task
        return None

    def _worker(self, wid: int):
        self.rt.tl.worker = wid
        self.rt.tl.chunk = 0
        while True:
            ctx = self.ctx
            task = self._find_task(wid) if ctx is not None else None
            if task is not None:
                self._execute(task, wid)
                continue
            with self.cv:
                if self.stopping:
                    return
                self.idle += 1
                self.cv.wait(0.01)
                self.idle -= 1

    def _execute(self, task: TaskRange, wid: int):
        rt = self.rt
        ctx = self.ctx
        if ctx is None or ctx.loop_id != task.loop_id:
            return
        with ctx.lock:
            ctx.active += 1
        try:
            cur, end = task.start, task.end
            grain = ctx.grain
            while cur < end:
                if rt.error is not None:
                    ctx.done.set()
                    return
                if self.idle > 0 and end - cur > grain:
                    mid = cur + (end - cur) // 2
                    mid -= mid % grain
                    if mid <= cur:
                        mid = cur + grain
                    if mid < end:
                        with self.dlocks[wid]:
                            self.deques[wid].append(
                                TaskRange(task.loop_id, mid, end, mid // grain)
                            )
                        rt.shards[wid].tasks_created += 1
                        end = mid
                        with self.cv:
                            self.cv.notify_all()
                hi = min(cur + grain, end)
                try:
                    ctx.run_chunk(cur, hi)
                except BaseException as exc:  # surfaced after quiescing
                    rt.fail(exc)
                    ctx.done.set()
                    return
                with ctx.lock:
                    ctx.remaining -= hi - cur
                    if ctx.remaining == 0:
                        ctx.done.set()
                cur = hi
        finally:
            with ctx.lock:
                ctx.active -= 1


# ---------------------------------------------------------------------------
# Scalar operation tables


def _wrap_fn(kind):
    bits = 32 if kind == I32 else 64
    span = 1 << bits
    mask = span - 1
    sign = 1 << (bits - 1)

    def wrap(x):
        x &= mask
        return x - span if x & sign else x

    return wrap


def _int_ops(kind):
    wrap = _wrap_fn(kind)

    def div(a, b):
        if b == 0:
            raise DivideByZero("integer division by zero")
        q = a // b
        if q < 0 and q * b != a:
            q += 1
        return wrap(q)

    def rem(a, b):
        if b == 0:
            raise DivideByZero("integer remainder by zero")
        q = a // b
        if q < 0 and q * b != a:
            q += 1
        return wrap(a - q * b)

    return {
        "+": lambda a, b: wrap(a + b),
        "-": lambda a, b: wrap(a - b),
        "*": lambda a, b: wrap(a * b),
        "/": div,
        "%": rem,
        "&": lambda a, b: a & b,
        "|": lambda a, b: a | b,
        "min": lambda a, b: b if b < a else a,
        "max": lambda a, b: b if b > a else a,
    }


def _float_ops(kind):
    rnd = f32_round if kind == F32 else (lambda v: v)
    inf = math.inf

    def div(a, b):
        if b == 0.0:
            if a == 0.0 or a != a:
                return math.nan
            return math.copysign(inf, a) * math.copysign(1.0, b)
        return rnd(a / b)

    def rem(a, b):
        if b == 0.0 or a != a or b != b or math.isinf(a):
            return math.nan
        return rnd(math.fmod(a, b))

    return {
        "+": lambda a, b: rnd(a + b),
        "-": lambda a, b: rnd(a - b),
        "*": lambda a, b: rnd(a * b),
        "/": div,
        "%": rem,
        "min": fold_fn(Scalar(kind), "min"),
        "max": fold_fn(Scalar(kind), "max"),
    }


_CMP_OPS = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}

_BOOL_OPS = {
    "&": lambda a, b: a and b,
    "|": lambda a, b: a or b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


def _scalar_binop(op, kind):
    if op in _CMP_OPS:
        return _CMP_OPS[op]
    if kind == BOOL:
        fn = _BOOL_OPS.get(op)
        if fn is None:
            raise EvalError(f"operator {op!r} undefined over bool")
        return fn
    table = _float_ops(kind) if kind in FLOAT_KINDS else _int_ops(kind)
    fn = table.get(op)
    if fn is None:
        raise EvalError(f"operator {op!r} undefined over {kind}")
    return fn


def _lanewise2(base):
    return lambda a, b: tuple(map(base, a, b))


def _cast_fn(src_kind, dst_kind):
    if src_kind == dst_kind:
        return lambda v: v
    if dst_kind in INT_KINDS:
        wrap = _wrap_fn(dst_kind)
        bits = 32 if dst_kind == I32 else 64
        hi = (1 << (bits - 1)) - 1
        lo = -(1 << (bits - 1))
        if src_kind in FLOAT_KINDS:

            def from_float(v):
                if v != v:
                    return 0
                if v == math.inf:
                    return hi
                if v == -math.inf:
                    return lo
                return wrap(int(v))

            return from_float
        return lambda v: wrap(int(v))
    if dst_kind in FLOAT_KINDS:
        if dst_kind == F32:
            return lambda v: f32_round(float(v))
        return lambda v: float(v)
    raise EvalError(f"cannot cast {src_kind} to {dst_kind}")


# ---------------------------------------------------------------------------
# Compilation: expression tree -> closure network

# Scope maps a name to (hops up the frame chain, slot index).


def _child_scope(scope, names):
    child = {k: (h + 1, s) for k, (h, s) in scope.items()}
    for i, name in enumerate(names):
        child[name] = (0, i + 1)
    return child


def _compile(rt: _Runtime, e: Expr, scope) -> callable:
    fn = _compile_inner(rt, e, scope)
    if rt.counting:
        ordinal = len(rt.node_prints)
        rt.node_prints.append(print_expr(e))
        shards = rt.shards
        tl = rt.tl

        def counted(frame):
            shards[getattr(tl, "worker", 0)].node_counts[ordinal] += 1
            return fn(frame)

        return counted
    return fn


def _compile_inner(rt: _Runtime, e: Expr, scope) -> callable:
    if isinstance(e, Literal):
        v = e.value
        if e.kind == F32 and isinstance(v, float):
            v = f32_round(v)
        return lambda frame: v

    if isinstance(e, Ident):
        try:
            hops, slot = scope[e.name]
        except KeyError:
            raise EvalError(f"unbound name {e.name!r}") from None
        if hops == 0:
            return lambda frame: frame[slot]
        if hops == 1:
            return lambda frame: frame[0][slot]

        def deep(frame):
            fr = frame
            for _ in range(hops):
                fr = fr[0]
            return fr[slot]

        return deep

    if isinstance(e, Let):
        vfn = _compile(rt, e.value, scope)
        bfn = _compile(rt, e.body, _child_scope(scope, [e.name]))
        return lambda frame: bfn([frame, vfn(frame)])

    if isinstance(e, Lambda):
        names = [p.name for p in e.params]
        bfn = _compile(rt, e.body, _child_scope(scope, names))
        n = len(names)
        return lambda frame: Closure(bfn, n, frame)

    if isinstance(e, Apply):
        ffn = _compile(rt, e.func, scope)
        afns = [_compile(rt, a, scope) for a in e.args]

        def apply(frame):
            c = ffn(frame)
            if not isinstance(c, Closure):
                raise EvalError("attempted to call a non-function value")
            return c.call([a(frame) for a in afns])

        return apply

    if isinstance(e, BinaryOp):
        lfn = _compile(rt, e.lhs, scope)
        rfn = _compile(rt, e.rhs, scope)
        if e.op == "&&":
            return lambda frame: rfn(frame) if lfn(frame) else False
        if e.op == "||":
            return lambda frame: True if lfn(frame) else rfn(frame)
        t = e.lhs.ty
        if isinstance(t, Simd):
            base = _scalar_binop(e.op, t.kind)
            lane = _lanewise2(base)
            return lambda frame: lane(lfn(frame), rfn(frame))
        base = _scalar_binop(e.op, t.kind)
        return lambda frame: base(lfn(frame), rfn(frame))

    if isinstance(e, UnaryOp):
        vfn = _compile(rt, e.operand, scope)
        t = e.operand.ty
        if e.op == "!":
            if isinstance(t, Simd):
                return lambda frame: tuple(not x for x in vfn(frame))
            return lambda frame: not vfn(frame)
        kind = t.kind
        if kind in FLOAT_KINDS:
            neg = (lambda v: f32_round(-v)) if kind == F32 else (lambda v: -v)
        else:
            wrap = _wrap_fn(kind)
            neg = lambda v: wrap(-v)
        if isinstance(t, Simd):
            return lambda frame: tuple(neg(x) for x in vfn(frame))
        return lambda frame: neg(vfn(frame))

    if isinstance(e, If):
        cfn = _compile(rt, e.cond, scope)
        tfn = _compile(rt, e.on_true, scope)
        ffn = _compile(rt, e.on_false, scope)
        return lambda frame: tfn(frame) if cfn(frame) else ffn(frame)

    if isinstance(e, BitSelect):
        cfn = _compile(rt, e.cond, scope)
        tfn = _compile(rt, e.on_true, scope)
        ffn = _compile(rt, e.on_false, scope)
        if isinstance(e.cond.ty, Simd):

            def select_lanes(frame):
                c = cfn(frame)
                t = tfn(frame)
                f = ffn(frame)
                return tuple(t[i] if c[i] else f[i] for i in range(len(c)))

            return select_lanes

        def select(frame):
            c = cfn(frame)
            t = tfn(frame)
            f = ffn(frame)
            return t if c else f

        return select

    if isinstance(e, Iterate):
        ifn = _compile(rt, e.init, scope)
        callu = _callable_for(rt, e.update, scope, 1)
        limit = rt.cfg.max_iterations

        def iterate(frame):
            state = ifn(frame)
            steps = 0
            while True:
                state, keep_going = callu(frame, (state,))
                steps += 1
                if not keep_going:
                    return state
                if steps >= limit:
                    raise IterationLimit(
                        f"iterate exceeded {limit} iterations"
                    )

        return iterate

    if isinstance(e, Lookup):
        cfn = _compile(rt, e.coll, scope)
        ifn = _compile(rt, e.index, scope)
        if isinstance(e.coll.ty, Vec):

            def lookup_vec(frame):
                v = cfn(frame)
                i = ifn(frame)
                if not 0 <= i < len(v):
                    raise IndexOutOfBounds(
                        f"index {i} outside vector of length {len(v)}"
                    )
                return v[i]

            return lookup_vec

        def lookup_dict(frame):
            d = cfn(frame)
            k = ifn(frame)
            try:
                return d[k]
            except KeyError:
                raise KeyNotFound(f"key {k!r} not in dictionary") from None

        return lookup_dict

    if isinstance(e, FieldAccess):
        bfn = _compile(rt, e.base, scope)
        o = e.ordinal
        return lambda frame: bfn(frame)[o]

    if isinstance(e, Len):
        cfn = _compile(rt, e.coll, scope)
        return lambda frame: len(cfn(frame))

    if isinstance(e, Sort):
        vfn = _compile(rt, e.vec, scope)
        callk = _callable_for(rt, e.key, scope, 1)
        ty = e.ty

        def sort(frame):
            src = vfn(frame)
            rt.shard().traversals += 1
            out = sorted(src, key=lambda x: order_key(callk(frame, (x,))))
            rt.materialized(out, payload_bytes(ty, out))
            return out

        return sort

    if isinstance(e, ToVec):
        mfn = _compile(rt, e.mapping, scope)
        ty = e.ty

        def tovec(frame):
            d = mfn(frame)
            out = [(k, d[k]) for k in sorted(d, key=order_key)]
            rt.materialized(out, payload_bytes(ty, out))
            return out

        return tovec

    if isinstance(e, MakeStruct):
        fns = [_compile(rt, item, scope) for item in e.items]
        return lambda frame: tuple(f(frame) for f in fns)

    if isinstance(e, MakeVector):
        fns = [_compile(rt, item, scope) for item in e.items]
        ty = e.ty

        def makevec(frame):
            out = [f(frame) for f in fns]
            rt.materialized(out, payload_bytes(ty, out))
            return out

        return makevec

    if isinstance(e, NewBuilder):
        kind = e.kind
        argfn = _compile(rt, e.arg, scope) if e.arg is not None else None
        strategy = rt.cfg.strategy
        if isinstance(kind, VecBuilder):
            if argfn is None:
                return lambda frame: new_builder_state(rt, kind, strategy)
            return lambda frame: new_builder_state(
                rt, kind, strategy, ctor_arg=argfn(frame)
            )
        if isinstance(kind, VecMerger):
            if argfn is None:
                raise EvalError("vecmerger needs an initial vector")
            return lambda frame: new_builder_state(
                rt, kind, strategy, ctor_arg=argfn(frame)
            )
        return lambda frame: new_builder_state(rt, kind, strategy)

    if isinstance(e, Merge):
        bfn = _compile(rt, e.builder, scope)
        vfn = _compile(rt, e.value, scope)
        tl = rt.tl
        if isinstance(e.value.ty, Simd):

            def merge_lanes(frame):
                b = bfn(frame)
                v = vfn(frame)
                key = (rt.step, getattr(tl, "chunk", 0))
                worker = getattr(tl, "worker", 0)
                for lane in v:
                    b.merge(lane, key, worker)
                return b

            return merge_lanes

        def merge(frame):
            b = bfn(frame)
            v = vfn(frame)
            b.merge(v, (rt.step, getattr(tl, "chunk", 0)), getattr(tl, "worker", 0))
            return b

        return merge

    if isinstance(e, Result):
        bfn = _compile(rt, e.builder, scope)

        def finish(payload):
            if isinstance(payload, BuilderState):
                return payload.result()
            if isinstance(payload, tuple):
                return tuple(finish(p) for p in payload)
            raise EvalError("result() applied to a non-builder value")

        return lambda frame: finish(bfn(frame))

    if isinstance(e, Broadcast):
        vfn = _compile(rt, e.value, scope)
        return lambda frame: (lambda v: (v,) * W)(vfn(frame))

    if isinstance(e, CastScalar):
        vfn = _compile(rt, e.value, scope)
        src = e.value.ty
        if isinstance(src, Simd):
            base = _cast_fn(src.kind, e.kind)
            return lambda frame: tuple(base(x) for x in vfn(frame))
        base = _cast_fn(src.kind, e.kind)
        return lambda frame: base(vfn(frame))

    if isinstance(e, ExternCall):
        afns = [_compile(rt, a, scope) for a in e.args]
        name = e.name

        def extern(frame):
            fn = rt.externs.get(name)
            if fn is None:
                raise ExternCallUnknown(f"no extern function {name!r} registered")
            args = [a(frame) for a in afns]
            try:
                return fn(*args)
            except Exception as exc:
                raise EvalError(f"extern {name!r} failed: {exc}") from exc

        return extern

    if isinstance(e, For):
        return _compile_for(rt, e, scope)

    raise EvalError(f"cannot evaluate node {type(e).__name__}")


def _callable_for(rt, func_expr, scope, nparams):
    """Compile a function-position expression.

    Lambda literals get a direct body call (no Closure allocation per
    invocation); anything else is evaluated to a Closure at call time.
    Returns call(frame, args) -> payload.
    """
    if isinstance(func_expr, Lambda):
        names = [p.name for p in func_expr.params]
        if len(names) != nparams:
            raise EvalError(
                f"function here takes {nparams} parameters, found {len(names)}"
            )
        bfn = _compile(rt, func_expr.body, _child_scope(scope, names))

        def call_direct(frame, args):
            inner = [frame]
            inner.extend(args)
            return bfn(inner)

        return call_direct

    ffn = _compile(rt, func_expr, scope)

    def call_closure(frame, args):
        c = ffn(frame)
        if not isinstance(c, Closure):
            raise EvalError("loop body is not a function")
        return c.call(list(args))

    return call_closure


def _compile_for(rt: _Runtime, e: For, scope):
    iter_parts = []
    for spec in e.iters:
        iter_parts.append((
            _compile(rt, spec.data, scope),
            _compile(rt, spec.start, scope) if spec.start is not None else None,
            _compile(rt, spec.end, scope) if spec.end is not None else None,
            _compile(rt, spec.stride, scope) if spec.stride is not None else None,
            spec.simd,
        ))
    bfn = _compile(rt, e.builders, scope)
    body = _callable_for(rt, e.func, scope, 3)
    grain = rt.cfg.grain_size
    tl = rt.tl

    any_simd = any(p[4] for p in iter_parts)
    if any_simd and not all(p[4] for p in iter_parts):
        raise EvalError("a loop cannot mix simd and scalar iteration")

    def run(frame):
        gathers = []
        count = None
        for dfn, sfn, efn, stfn, simd in iter_parts:
            data = dfn(frame)
            length = len(data)
            if simd:
                n = length // W
                gathers.append(
                    (lambda d: lambda i: tuple(d[i * W:i * W + W]))(data)
                )
            elif sfn is None and efn is None and stfn is None:
                n = length
                gathers.append((lambda d: lambda i: d[i])(data))
            else:
                s = sfn(frame) if sfn is not None else 0
                end = efn(frame) if efn is not None else length
                st = stfn(frame) if stfn is not None else 1
                if st < 1:
                    raise EvalError(f"iteration stride must be positive, got {st}")
                if not (0 <= s <= end <= length):
                    raise IndexOutOfBounds(
                        f"iteration bounds [{s}, {end}) outside vector of "
                        f"length {length}"
                    )
                n = (end - s + st - 1) // st
                gathers.append(
                    (lambda d, s0, st0: lambda i: d[s0 + i * st0])(data, s, st)
                )
            if count is None:
                count = n
            elif count != n:
                raise ZipLengthMismatch(
                    f"zipped iterations disagree: {count} vs {n}"
                )
        builders = bfn(frame)
        if count == 0:
            # Nothing read: a zero-iteration loop (a vectorized remainder on
            # an exactly divisible length, say) is not a walk over the data.
            return builders
        rt.shard().traversals += len(iter_parts)
        if len(gathers) == 1:
            gather = gathers[0]
        else:
            gather = lambda i: tuple(g(i) for g in gathers)

        claim = (not rt.parallel_active) and count > 1
        if not claim:
            for i in range(count):
                body(frame, (builders, i, gather(i)))
            return builders

        rt.parallel_active = True
        rt.step += 1
        prev_chunk = getattr(tl, "chunk", 0)
        try:
            def run_chunk(lo, hi):
                tl.chunk = lo // grain
                for i in range(lo, hi):
                    body(frame, (builders, i, gather(i)))

            if rt.pool is not None and count > grain:
                ctx = _LoopCtx(rt.step, count, grain, run_chunk)
                rt.pool.run_loop(ctx, TaskRange(rt.step, 0, count, 0))
                if rt.error is not None:
                    err, rt.error = rt.error, None
                    raise err
            else:
                rt.shard().tasks_created += 1
                for lo in range(0, count, grain):
                    run_chunk(lo, min(lo + grain, count))
        finally:
            tl.chunk = prev_chunk
            rt.step += 1
            rt.parallel_active = False
        return builders

    return run


# ---------------------------------------------------------------------------
# Entry point


def _collect_container_ids(payload, acc: set):
    stack = [payload]
    while stack:
        p = stack.pop()
        if isinstance(p, list):
            if id(p) in acc:
                continue
            acc.add(id(p))
            stack.extend(p)
        elif isinstance(p, dict):
            if id(p) in acc:
                continue
            acc.add(id(p))
            stack.extend(p.values())
        elif isinstance(p, tuple):
            stack.extend(p)


def evaluate(e: Expr, env=None, config: EngineConfig | None = None,
             externs=None):
    """Run a type-checked core expression. Returns (Value, EvalStats).

    env maps free variable names to Value wrappers (raw payloads are also
    accepted; types are taken from the checked expression). externs maps
    extern function names to host callables over payloads.
    """
    cfg = config or EngineConfig()
    if cfg.threads < 1:
        raise EvalError("threads must be at least 1")
    if cfg.strategy not in STRATEGIES:
        raise EvalError(f"unknown merge strategy {cfg.strategy!r}")
    if cfg.grain_size < 1:
        raise EvalError("grain_size must be at least 1")
    if e.ty is None:
        raise EvalError("expression must be type-checked before evaluation")

    note_evaluation()
    rt = _Runtime(cfg, externs or {})

    names = list(env.keys()) if env else []
    frame0 = [None]
    scope = {}
    for i, name in enumerate(names):
        v = env[name]
        frame0.append(v.data if isinstance(v, Value) else v)
        scope[name] = (0, i + 1)

    fn = _compile(rt, e, scope)
    rt.finalize_counting()
    if cfg.threads > 1:
        rt.pool = _Pool(rt)
    try:
        payload = fn(frame0)
    finally:
        if rt.pool is not None:
            rt.pool.shutdown()
            rt.pool = None

    stats = EvalStats()
    for shard in rt.shards:
        stats.vector_traversals += shard.traversals
        stats.vector_allocations += shard.allocs
        stats.vecbuilder_reallocations += shard.reallocs
        stats.tasks_created += shard.tasks_created
        stats.tasks_stolen += shard.tasks_stolen
    if rt.counting:
        totals: dict[str, int] = {}
        for ordinal, text in enumerate(rt.node_prints):
            n = sum(shard.node_counts[ordinal] for shard in rt.shards)
            totals[text] = totals.get(text, 0) + n
        stats.node_evals = totals

    reachable: set[int] = set()
    _collect_container_ids(payload, reachable)
    kept = 0
    for obj, nbytes in rt.registry:
        if id(obj) in reachable:
            kept += 1
        else:
            rt.free(nbytes)
    rt.registry.clear()
    stats.peak_bytes = rt.peak
    stats.live_bytes = rt.live
    stats.intermediate_allocations = stats.vector_allocations - kept
    return Value(e.ty, payload), stats
