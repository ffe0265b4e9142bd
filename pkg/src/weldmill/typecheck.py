"""Type inference and the single-use builder check.

``infer`` runs unification over the tree and returns a rebuilt copy with every
node's ``ty`` filled in and every numeric literal pinned to a concrete kind.
Constraints that depend on the shape of a type (field access, lookups, merges,
results) wait on a worklist until enough is known, then fire.  Unsuffixed
numeric literals stay open between the two int (or two float) kinds and
default to the wider one if nothing else decides.

``check_linearity`` walks a typed tree tracking builder tokens: every builder
must be used exactly once on every control path, loop bodies must return the
builders they were given, and builders may not hide inside functions that can
run more than once.
"""
from __future__ import annotations

import itertools
from dataclasses import replace

from .errors import (
    CONSUMED_TWICE,
    LOOP_ESCAPE,
    LinearityError,
    TypeCheckError,
    UNCONSUMED,
)
from .expr import (
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
    Param,
    Result,
    Sort,
    SugarOp,
    ToVec,
    UnaryOp,
    map_children,
)
from .types import (
    ARITH_OPS,
    BITWISE_OPS,
    BOOL,
    Builder,
    BuilderKind,
    CMP_OPS,
    Dict,
    DictMerger,
    F32,
    F64,
    FLOAT_KINDS,
    Function,
    GroupBuilder,
    I32,
    I32_MAX,
    I32_MIN,
    I64,
    INT_KINDS,
    IrType,
    LOGIC_OPS,
    Merger,
    MINMAX_OPS,
    NUMERIC_KINDS,
    Scalar,
    SCALAR_KINDS,
    Simd,
    Struct,
    Vec,
    VecBuilder,
    VecMerger,
    contains_builder,
    f32_round,
    is_hashable_key,
    op_admissible,
    validate_type,
)

_tvar_ids = itertools.count()


class TVar(IrType):
    """A type still being solved. Identity-based; union-find via ``ref``."""

    __slots__ = ("id", "ref", "shapes", "flexible")

    def __init__(self, shapes=None, flexible=None):
        self.id = next(_tvar_ids)
        self.ref = None
        self.shapes = shapes  # frozenset of ("scalar"|"simd", kind), or None
        self.flexible = flexible  # "int" | "float" for open literals

    def __str__(self):
        if self.shapes:
            opts = sorted({k if f == "scalar" else f"simd[{k}]" for f, k in self.shapes})
            if len(opts) <= 4:
                return "?(" + "|".join(opts) + ")"
        return "?"

    def __repr__(self):
        return f"TVar#{self.id}"


def _shapes(*pairs):
    return frozenset(pairs)


SH_ALL_SCALAR = _shapes(*(("scalar", k) for k in SCALAR_KINDS))
SH_ALL_SIMD = _shapes(*(("simd", k) for k in SCALAR_KINDS))
SH_NUM_SCALAR = _shapes(*(("scalar", k) for k in NUMERIC_KINDS))
SH_NUM_SIMD = _shapes(*(("simd", k) for k in NUMERIC_KINDS))
SH_NUMERIC = SH_NUM_SCALAR | SH_NUM_SIMD
SH_INT_LIT = _shapes(("scalar", I32), ("scalar", I64))
SH_FLOAT_LIT = _shapes(("scalar", F32), ("scalar", F64))
SH_BOOLISH = _shapes(("scalar", BOOL), ("simd", BOOL))
SH_BITWISE = _shapes(
    ("scalar", I32), ("scalar", I64), ("scalar", BOOL),
    ("simd", I32), ("simd", I64), ("simd", BOOL),
)
SH_ORDERED = SH_NUMERIC
SH_EQ = SH_NUMERIC | _shapes(("scalar", BOOL))
SH_SELECT = SH_ALL_SCALAR | SH_ALL_SIMD


def find(t: IrType) -> IrType:
    while isinstance(t, TVar) and t.ref is not None:
        t = t.ref
    return t


def resolve(t: IrType) -> IrType:
    """Deep-resolve; any still-open variables remain as TVar leaves."""
    t = find(t)
    if isinstance(t, TVar):
        return t
    if isinstance(t, Vec):
        return Vec(resolve(t.elem))
    if isinstance(t, Dict):
        return Dict(resolve(t.key), resolve(t.value))
    if isinstance(t, Struct):
        return Struct(tuple(resolve(f) for f in t.fields))
    if isinstance(t, Function):
        return Function(tuple(resolve(p) for p in t.params), resolve(t.ret))
    if isinstance(t, Builder):
        return Builder(_resolve_kind(t.kind))
    return t


def _resolve_kind(k: BuilderKind) -> BuilderKind:
    if isinstance(k, VecBuilder):
        return VecBuilder(resolve(k.elem))
    if isinstance(k, Merger):
        return Merger(resolve(k.elem), k.op)
    if isinstance(k, DictMerger):
        return DictMerger(resolve(k.key), resolve(k.value), k.op)
    if isinstance(k, VecMerger):
        return VecMerger(resolve(k.elem), k.op)
    return GroupBuilder(resolve(k.key), resolve(k.value))


def _has_tvar(t: IrType) -> bool:
    t = find(t)
    if isinstance(t, TVar):
        return True
    if isinstance(t, Vec):
        return _has_tvar(t.elem)
    if isinstance(t, Dict):
        return _has_tvar(t.key) or _has_tvar(t.value)
    if isinstance(t, Struct):
        return any(_has_tvar(f) for f in t.fields)
    if isinstance(t, Function):
        return any(_has_tvar(p) for p in t.params) or _has_tvar(t.ret)
    if isinstance(t, Builder):
        k = t.kind
        parts = [getattr(k, n) for n in ("elem", "key", "value") if hasattr(k, n)]
        return any(_has_tvar(p) for p in parts)
    return False


def _occurs(tv: TVar, t: IrType) -> bool:
    t = find(t)
    if t is tv:
        return True
    if isinstance(t, TVar):
        return False
    if isinstance(t, Vec):
        return _occurs(tv, t.elem)
    if isinstance(t, Dict):
        return _occurs(tv, t.key) or _occurs(tv, t.value)
    if isinstance(t, Struct):
        return any(_occurs(tv, f) for f in t.fields)
    if isinstance(t, Function):
        return any(_occurs(tv, p) for p in t.params) or _occurs(tv, t.ret)
    if isinstance(t, Builder):
        k = t.kind
        parts = [getattr(k, n) for n in ("elem", "key", "value") if hasattr(k, n)]
        return any(_occurs(tv, p) for p in parts)
    return False


def _shape_of(t: IrType):
    if isinstance(t, Scalar):
        return ("scalar", t.kind)
    if isinstance(t, Simd):
        return ("simd", t.kind)
    return None


def _shape_type(shape):
    form, kind = shape
    return Scalar(kind) if form == "scalar" else Simd(kind)


def render(t: IrType) -> str:
    return str(resolve(t))


class _Ctx:
    def __init__(self):
        self.tasks: list[tuple] = []  # (callable -> bool, span)
        self.flexibles: list[TVar] = []
        self.tys: dict[int, IrType] = {}
        self.param_tys: dict[int, IrType] = {}
        self.kinds: dict[int, BuilderKind] = {}
        self.final_checks: list = []  # callables run after solving

    def fresh(self, shapes=None, flexible=None) -> TVar:
        tv = TVar(shapes, flexible)
        if flexible:
            self.flexibles.append(tv)
        return tv

    def task(self, fn, span):
        if not fn():
            self.tasks.append((fn, span))

    def err(self, message: str, span, left=None, right=None):
        if left is not None or right is not None:
            message = f"{message}: {render(left)} vs {render(right)}"
        raise TypeCheckError(message, span, left=left and resolve(left), right=right and resolve(right))

    # -- unification ---------------------------------------------------------
    def constrain(self, t: IrType, shapes: frozenset, span, what: str):
        t = find(t)
        if isinstance(t, TVar):
            ns = shapes if t.shapes is None else (t.shapes & shapes)
            if not ns:
                self.err(f"no type fits {what} here", span)
            t.shapes = ns
            return
        sh = _shape_of(t)
        if sh is None or sh not in shapes:
            self.err(f"{render(t)} does not support {what}", span)

    def _bind(self, tv: TVar, t: IrType, span):
        t_ = find(t)
        if t_ is tv:
            return
        if isinstance(t_, TVar):
            if tv.shapes is not None:
                ns = tv.shapes if t_.shapes is None else (tv.shapes & t_.shapes)
                if not ns:
                    self.err("types disagree", span, tv, t_)
                t_.shapes = ns
            if tv.flexible and not t_.flexible:
                t_.flexible = tv.flexible
                self.flexibles.append(t_)
            tv.ref = t_
            return
        if _occurs(tv, t_):
            self.err("a type would have to contain itself", span)
        if tv.shapes is not None:
            sh = _shape_of(t_)
            if sh is None or sh not in tv.shapes:
                self.err("types disagree", span, tv, t_)
        tv.ref = t_

    def unify(self, a: IrType, b: IrType, span, what: str = ""):
        a, b = find(a), find(b)
        if a is b:
            return
        if isinstance(a, TVar):
            self._bind(a, b, span)
            return
        if isinstance(b, TVar):
            self._bind(b, a, span)
            return
        note = f" in {what}" if what else ""
        if isinstance(a, Scalar) and isinstance(b, Scalar):
            if a.kind != b.kind:
                self.err(f"types disagree{note}", span, a, b)
            return
        if isinstance(a, Simd) and isinstance(b, Simd):
            if a.kind != b.kind or a.width != b.width:
                self.err(f"types disagree{note}", span, a, b)
            return
        if isinstance(a, Vec) and isinstance(b, Vec):
            self.unify(a.elem, b.elem, span, what)
            return
        if isinstance(a, Dict) and isinstance(b, Dict):
            self.unify(a.key, b.key, span, what)
            self.unify(a.value, b.value, span, what)
            return
        if isinstance(a, Struct) and isinstance(b, Struct):
            if len(a.fields) != len(b.fields):
                self.err(f"struct widths disagree{note}", span, a, b)
            for x, y in zip(a.fields, b.fields):
                self.unify(x, y, span, what)
            return
        if isinstance(a, Function) and isinstance(b, Function):
            if len(a.params) != len(b.params):
                self.err(f"function arities disagree{note}", span, a, b)
            for x, y in zip(a.params, b.params):
                self.unify(x, y, span, what)
            self.unify(a.ret, b.ret, span, what)
            return
        if isinstance(a, Builder) and isinstance(b, Builder):
            ka, kb = a.kind, b.kind
            if type(ka) is not type(kb):
                self.err(f"builder kinds disagree{note}", span, a, b)
            if getattr(ka, "op", None) != getattr(kb, "op", None):
                self.err(f"merge ops disagree{note}", span, a, b)
            for slot in ("elem", "key", "value"):
                if hasattr(ka, slot):
                    self.unify(getattr(ka, slot), getattr(kb, slot), span, what)
            return
        self.err(f"types disagree{note}", span, a, b)

    def pump(self):
        progress = True
        while progress and self.tasks:
            pending = []
            for fn, span in self.tasks:
                if not fn():
                    pending.append((fn, span))
            progress = len(pending) != len(self.tasks)
            self.tasks = pending

    def default_flexibles(self) -> bool:
        changed = False
        for tv in self.flexibles:
            r = find(tv)
            if not isinstance(r, TVar) or not r.flexible:
                continue
            order = ("i64", "i32") if r.flexible == "int" else ("f64", "f32")
            pick = None
            allowed = r.shapes or SH_ALL_SCALAR
            for k in order:
                if ("scalar", k) in allowed:
                    pick = Scalar(k)
                    break
            if pick is None:
                # Only simd shapes left: the literal became a lane value.
                for k in order:
                    if ("simd", k) in allowed:
                        pick = Simd(k)
                        break
            if pick is None:
                raise TypeCheckError("a literal has no type that fits its uses")
            r.ref = pick
            r.flexible = None
            changed = True
        return changed


def _kind_with_tvars(ctx: _Ctx, kind: BuilderKind) -> BuilderKind:
    f = lambda t: _ann_itype(ctx, t) if t is not None else ctx.fresh()
    if isinstance(kind, VecBuilder):
        return VecBuilder(f(kind.elem))
    if isinstance(kind, Merger):
        return Merger(f(kind.elem), kind.op)
    if isinstance(kind, DictMerger):
        return DictMerger(f(kind.key), f(kind.value), kind.op)
    if isinstance(kind, VecMerger):
        return VecMerger(f(kind.elem), kind.op)
    if isinstance(kind, GroupBuilder):
        return GroupBuilder(f(kind.key), f(kind.value))
    raise TypeCheckError(f"unknown builder kind {kind!r}")


def _ann_itype(ctx: _Ctx, t: IrType) -> IrType:
    """Turn a source-level type (possibly with builder holes) into a solver type."""
    if isinstance(t, TVar):
        return t
    if isinstance(t, Scalar):
        return t
    if isinstance(t, Simd):
        if t.kind == BOOL:
            raise TypeCheckError("lane-wide bool is internal to comparisons and bitselect")
        return t
    if isinstance(t, Vec):
        return Vec(_ann_itype(ctx, t.elem))
    if isinstance(t, Dict):
        return Dict(_ann_itype(ctx, t.key), _ann_itype(ctx, t.value))
    if isinstance(t, Struct):
        return Struct(tuple(_ann_itype(ctx, f) for f in t.fields))
    if isinstance(t, Function):
        return Function(tuple(_ann_itype(ctx, p) for p in t.params), _ann_itype(ctx, t.ret))
    if isinstance(t, Builder):
        return Builder(_kind_with_tvars(ctx, t.kind))
    raise TypeCheckError(f"unknown type {t!r}")


def _merge_input(kind: BuilderKind) -> IrType:
    if isinstance(kind, (VecBuilder, Merger)):
        return kind.elem
    if isinstance(kind, VecMerger):
        return Struct((Scalar(I64), kind.elem))
    return Struct((kind.key, kind.value))  # DictMerger, GroupBuilder


def _result_itype(kind: BuilderKind) -> IrType:
    if isinstance(kind, VecBuilder):
        return Vec(kind.elem)
    if isinstance(kind, Merger):
        return kind.elem
    if isinstance(kind, DictMerger):
        return Dict(kind.key, kind.value)
    if isinstance(kind, VecMerger):
        return Vec(kind.elem)
    return Dict(kind.key, Vec(kind.value))  # GroupBuilder


def infer(expr: Expr, env: dict[str, IrType] | None = None) -> Expr:
    """Infer and pin every type; returns a rebuilt tree. Raises TypeCheckError."""
    ctx = _Ctx()
    tenv: dict[str, IrType] = {}
    for name, t in (env or {}).items():
        try:
            validate_type(t, allow_builders=False)
        except Exception as ex:
            raise TypeCheckError(f"bad type for {name!r}: {ex}") from ex
        tenv[name] = _ann_itype(ctx, t)

    _infer(ctx, expr, tenv)

    ctx.pump()
    while ctx.default_flexibles():
        ctx.pump()
    if ctx.tasks:
        raise TypeCheckError("not enough information to finish typing this expression", ctx.tasks[0][1])
    for check in ctx.final_checks:
        check()
    return _rebuild(ctx, expr)


def _infer(ctx: _Ctx, e: Expr, tenv: dict[str, IrType]) -> IrType:
    t = _infer_inner(ctx, e, tenv)
    ctx.tys[id(e)] = t
    return t


def _infer_inner(ctx: _Ctx, e: Expr, tenv: dict[str, IrType]) -> IrType:
    span = e.span
    if isinstance(e, Literal):
        v = e.value
        if e.kind == BOOL or isinstance(v, bool):
            return Scalar(BOOL)
        if isinstance(v, int):
            if e.kind in INT_KINDS:
                return Scalar(e.kind)
            shapes = SH_INT_LIT
            if not (I32_MIN <= v <= I32_MAX):
                shapes = _shapes(("scalar", I64))
            return ctx.fresh(shapes, flexible="int")
        if e.kind in FLOAT_KINDS:
            return Scalar(e.kind)
        return ctx.fresh(SH_FLOAT_LIT, flexible="float")

    if isinstance(e, Ident):
        t = tenv.get(e.name)
        if t is None:
            raise TypeCheckError(f"unbound name {e.name!r}", span)
        return t

    if isinstance(e, Let):
        vt = _infer(ctx, e.value, tenv)
        return _infer(ctx, e.body, {**tenv, e.name: vt})

    if isinstance(e, Lambda):
        ptys = []
        inner = dict(tenv)
        for p in e.params:
            pt = _ann_itype(ctx, p.ty_ann) if p.ty_ann is not None else ctx.fresh()
            ctx.param_tys[id(p)] = pt
            inner[p.name] = pt
            ptys.append(pt)
        bt = _infer(ctx, e.body, inner)
        return Function(tuple(ptys), bt)

    if isinstance(e, BinaryOp):
        lt = _infer(ctx, e.lhs, tenv)
        rt = _infer(ctx, e.rhs, tenv)
        op = e.op
        if op in LOGIC_OPS:
            ctx.unify(lt, Scalar(BOOL), span, f"'{op}'")
            ctx.unify(rt, Scalar(BOOL), span, f"'{op}'")
            return Scalar(BOOL)
        ctx.unify(lt, rt, span, f"'{op}'")
        if op in ARITH_OPS or op in MINMAX_OPS:
            ctx.constrain(lt, SH_NUMERIC, span, f"'{op}'")
            return lt
        if op in BITWISE_OPS:
            ctx.constrain(lt, SH_BITWISE, span, f"'{op}'")
            return lt
        if op in CMP_OPS:
            ctx.constrain(lt, SH_EQ if op in ("==", "!=") else SH_ORDERED, span, f"'{op}'")
            r = ctx.fresh()

            def fire(lt=lt, r=r):
                t = find(lt)
                if isinstance(t, TVar):
                    return False
                ctx.unify(r, Simd(BOOL) if isinstance(t, Simd) else Scalar(BOOL), span)
                return True

            ctx.task(fire, span)
            return r
        raise TypeCheckError(f"unknown operator {op!r}", span)

    if isinstance(e, UnaryOp):
        t = _infer(ctx, e.operand, tenv)
        if e.op == "-":
            ctx.constrain(t, SH_NUMERIC, span, "negation")
        else:
            ctx.constrain(t, SH_BOOLISH, span, "'!'")
        return t

    if isinstance(e, If):
        ctx.unify(_infer(ctx, e.cond, tenv), Scalar(BOOL), span, "an if condition")
        tt = _infer(ctx, e.on_true, tenv)
        ft = _infer(ctx, e.on_false, tenv)
        ctx.unify(tt, ft, span, "the branches of if")
        return tt

    if isinstance(e, BitSelect):
        ct = _infer(ctx, e.cond, tenv)
        ctx.constrain(ct, SH_BOOLISH, span, "a bitselect condition")
        tt = _infer(ctx, e.on_true, tenv)
        ft = _infer(ctx, e.on_false, tenv)
        ctx.unify(tt, ft, span, "the arms of bitselect")
        ctx.constrain(tt, SH_SELECT, span, "bitselect")

        def fire(ct=ct, tt=tt):
            c = find(ct)
            if isinstance(c, TVar):
                return False
            shapes = SH_ALL_SIMD if isinstance(c, Simd) else SH_ALL_SCALAR
            ctx.constrain(tt, shapes, span, "bitselect")
            return True

        ctx.task(fire, span)
        return tt

    if isinstance(e, Iterate):
        st = _infer(ctx, e.init, tenv)
        ut = _infer(ctx, e.update, tenv)
        ctx.unify(ut, Function((st,), Struct((st, Scalar(BOOL)))), span, "an iterate update")

        def check_state(st=st, span=span):
            t = resolve(st)
            if contains_builder(t):
                raise TypeCheckError("loop state cannot contain builders", span)

        ctx.final_checks.append(check_state)
        return st

    if isinstance(e, Lookup):
        ct = _infer(ctx, e.coll, tenv)
        it = _infer(ctx, e.index, tenv)
        r = ctx.fresh()

        def fire(ct=ct, it=it, r=r):
            c = find(ct)
            if isinstance(c, TVar):
                return False
            if isinstance(c, Vec):
                ctx.unify(it, Scalar(I64), span, "a vector index")
                ctx.unify(r, c.elem, span)
                return True
            if isinstance(c, Dict):
                ctx.unify(it, c.key, span, "a dictionary key")
                ctx.unify(r, c.value, span)
                return True
            raise TypeCheckError(f"lookup needs a vector or dictionary, found {render(c)}", span)

        ctx.task(fire, span)
        return r

    if isinstance(e, FieldAccess):
        bt = _infer(ctx, e.base, tenv)
        r = ctx.fresh()

        def fire(bt=bt, r=r, k=e.ordinal):
            b = find(bt)
            if isinstance(b, TVar):
                return False
            if isinstance(b, Struct):
                if not (0 <= k < len(b.fields)):
                    raise TypeCheckError(f"no field .{k} in {render(b)}", span)
                ctx.unify(r, b.fields[k], span)
                return True
            raise TypeCheckError(f".{k} needs a struct, found {render(b)}", span)

        ctx.task(fire, span)
        return r

    if isinstance(e, Len):
        ctx.unify(_infer(ctx, e.coll, tenv), Vec(ctx.fresh()), span, "len")
        return Scalar(I64)

    if isinstance(e, Sort):
        elem = ctx.fresh()
        ctx.unify(_infer(ctx, e.vec, tenv), Vec(elem), span, "sort")
        keyt = _infer(ctx, e.key, tenv)
        s = ctx.fresh(SH_NUM_SCALAR)
        ctx.unify(keyt, Function((elem,), s), span, "a sort key")
        return Vec(elem)

    if isinstance(e, ToVec):
        k, v = ctx.fresh(), ctx.fresh()
        ctx.unify(_infer(ctx, e.mapping, tenv), Dict(k, v), span, "tovec")
        return Vec(Struct((k, v)))

    if isinstance(e, MakeStruct):
        return Struct(tuple(_infer(ctx, x, tenv) for x in e.items))

    if isinstance(e, MakeVector):
        elem = ctx.fresh()
        for x in e.items:
            ctx.unify(_infer(ctx, x, tenv), elem, x.span or span, "a vector literal")
        return Vec(elem)

    if isinstance(e, NewBuilder):
        kind = _kind_with_tvars(ctx, e.kind)
        ctx.kinds[id(e)] = kind
        if e.arg is not None:
            at = _infer(ctx, e.arg, tenv)
            if isinstance(kind, VecBuilder):
                ctx.unify(at, Scalar(I64), span, "a size hint")
            else:
                ctx.unify(at, Vec(kind.elem), span, "a vecmerger initial vector")

        def check_kind(kind=kind, span=span):
            rk = _resolve_kind(kind)
            op = getattr(rk, "op", None)
            if op is not None:
                elem = rk.value if isinstance(rk, DictMerger) else rk.elem
                if not op_admissible(op, elem):
                    raise TypeCheckError(f"'{op}' cannot fold values of type {elem}", span)
            key = getattr(rk, "key", None)
            if key is not None and not is_hashable_key(key):
                raise TypeCheckError(f"{key} cannot be a key type", span)

        ctx.final_checks.append(check_kind)
        return Builder(kind)

    if isinstance(e, Merge):
        bt = _infer(ctx, e.builder, tenv)
        vt = _infer(ctx, e.value, tenv)

        def fire(bt=bt, vt=vt):
            b = find(bt)
            if isinstance(b, TVar):
                return False
            if not isinstance(b, Builder):
                raise TypeCheckError(f"merge needs a builder, found {render(b)}", span)
            kind = b.kind
            v = find(vt)
            if isinstance(v, Simd) and isinstance(kind, (VecBuilder, Merger)):
                # Lane-wide merge: folds (or appends) the lanes elementwise.
                ctx.unify(kind.elem, Scalar(v.kind), span, "a lane-wide merge")
            else:
                ctx.unify(vt, _merge_input(kind), span, "a merge")
            return True

        ctx.task(fire, span)
        return bt

    if isinstance(e, Result):
        bt = _infer(ctx, e.builder, tenv)
        r = ctx.fresh()
        _result_task(ctx, bt, r, span)
        return r

    if isinstance(e, For):
        if any(it.simd for it in e.iters) and not all(it.simd for it in e.iters):
            raise TypeCheckError("a loop mixes lane-wide and element iteration", span)
        elems = []
        for it in e.iters:
            dt = _infer(ctx, it.data, tenv)
            if it.simd:
                ek = ctx.fresh(SH_NUM_SCALAR)
                ctx.unify(dt, Vec(ek), it.data.span or span, "a loop vector")
                lane = ctx.fresh()

                def fire(ek=ek, lane=lane):
                    t = find(ek)
                    if isinstance(t, TVar):
                        return False
                    ctx.unify(lane, Simd(t.kind), span)
                    return True

                ctx.task(fire, span)
                elems.append(lane)
            else:
                ek = ctx.fresh()
                ctx.unify(dt, Vec(ek), it.data.span or span, "a loop vector")
                elems.append(ek)
            for bound in (it.start, it.end, it.stride):
                if bound is not None:
                    ctx.unify(_infer(ctx, bound, tenv), Scalar(I64), bound.span or span, "a loop bound")
        elem = elems[0] if len(elems) == 1 else Struct(tuple(elems))
        bt = _infer(ctx, e.builders, tenv)
        ft = _infer(ctx, e.func, tenv)
        ctx.unify(ft, Function((bt, Scalar(I64), elem), bt), span, "a loop function")
        return bt

    if isinstance(e, Apply):
        ft = _infer(ctx, e.func, tenv)
        ats = tuple(_infer(ctx, a, tenv) for a in e.args)
        r = ctx.fresh()
        ctx.unify(ft, Function(ats, r), span, "a call")
        return r

    if isinstance(e, ExternCall):
        sig = tenv.get(e.name)
        if sig is None:
            raise TypeCheckError(f"unknown host function {e.name!r}", span)
        sig = find(sig)
        if not isinstance(sig, Function):
            raise TypeCheckError(f"{e.name!r} is not callable", span)
        if len(sig.params) != len(e.args):
            raise TypeCheckError(
                f"{e.name!r} takes {len(sig.params)} argument(s), got {len(e.args)}", span
            )
        for a, pt in zip(e.args, sig.params):
            ctx.unify(_infer(ctx, a, tenv), pt, a.span or span, f"a call to {e.name!r}")
        return sig.ret

    if isinstance(e, Broadcast):
        vt = _infer(ctx, e.value, tenv)
        ctx.constrain(vt, SH_NUM_SCALAR, span, "broadcast")
        r = ctx.fresh()

        def fire(vt=vt, r=r):
            t = find(vt)
            if isinstance(t, TVar):
                return False
            ctx.unify(r, Simd(t.kind), span)
            return True

        ctx.task(fire, span)
        return r

    if isinstance(e, CastScalar):
        vt = _infer(ctx, e.value, tenv)
        ctx.constrain(vt, SH_ALL_SCALAR | SH_ALL_SIMD, span, "cast")
        r = ctx.fresh()

        def fire(vt=vt, r=r, kind=e.kind):
            t = find(vt)
            if isinstance(t, TVar):
                return False
            ctx.unify(r, Simd(kind) if isinstance(t, Simd) else Scalar(kind), span)
            return True

        ctx.task(fire, span)
        return r

    if isinstance(e, SugarOp):
        raise TypeCheckError(f"{e.name} is surface sugar; expand it before typing", span)

    raise TypeCheckError(f"unknown node {type(e).__name__}", span)


def _result_task(ctx: _Ctx, bt: IrType, r: IrType, span):
    def fire():
        b = find(bt)
        if isinstance(b, TVar):
            return False
        if isinstance(b, Builder):
            ctx.unify(r, _result_itype(b.kind), span)
            return True
        if isinstance(b, Struct):
            subs = tuple(ctx.fresh() for _ in b.fields)
            ctx.unify(r, Struct(subs), span)
            for f, sub in zip(b.fields, subs):
                _result_task(ctx, f, sub, span)
            return True
        raise TypeCheckError(f"result needs a builder, found {render(b)}", span)

    ctx.task(fire, span)


def _rebuild(ctx: _Ctx, e: Expr) -> Expr:
    ty = resolve(ctx.tys[id(e)])
    if _has_tvar(ty):
        raise TypeCheckError("cannot infer a type for this expression", e.span)
    if isinstance(e, Literal):
        if isinstance(e.value, bool):
            return replace(e, kind=BOOL, ty=ty)
        value = e.value
        if isinstance(ty, Scalar) and ty.kind == F32:
            value = f32_round(value)
        return replace(e, value=value, kind=ty.kind, ty=ty)
    if isinstance(e, Lambda):
        params = []
        for p in e.params:
            pt = resolve(ctx.param_tys[id(p)])
            if _has_tvar(pt):
                raise TypeCheckError(f"cannot infer a type for parameter {p.name!r}", e.span)
            params.append(Param(p.name, pt))
        return replace(e, params=tuple(params), body=_rebuild(ctx, e.body), ty=ty)
    if isinstance(e, NewBuilder):
        kind = _resolve_kind(ctx.kinds[id(e)])
        if _has_tvar(Builder(kind)):
            raise TypeCheckError("cannot infer this builder's element types", e.span)
        try:
            validate_type(Builder(kind))
        except Exception as ex:
            raise TypeCheckError(str(ex), e.span) from ex
        arg = _rebuild(ctx, e.arg) if e.arg is not None else None
        return replace(e, kind=kind, arg=arg, ty=ty)
    out = map_children(e, lambda c: _rebuild(ctx, c))
    return replace(out, ty=ty)


# ---------------------------------------------------------------------------
# Linearity: builders are single-use values.
# ---------------------------------------------------------------------------

_tok_ids = itertools.count()


class _Tok:
    __slots__ = ("id", "root", "hint")

    def __init__(self, root, hint):
        self.id = next(_tok_ids)
        self.root = root  # component path inside a loop's builder argument
        self.hint = hint  # variable-ish name for error messages


class _LamClo:
    __slots__ = ("lam", "env")

    def __init__(self, lam, env):
        self.lam = lam
        self.env = env


def _is_builderish(ty: IrType) -> bool:
    if isinstance(ty, Builder):
        return True
    if isinstance(ty, Struct):
        return any(_is_builderish(f) for f in ty.fields)
    return False


def _toks_in(a, out=None):
    if out is None:
        out = []
    if isinstance(a, _Tok):
        out.append(a)
    elif isinstance(a, tuple):
        for x in a:
            _toks_in(x, out)
    return out


def _describe(e: Expr) -> str:
    if isinstance(e, Ident):
        return e.name
    if isinstance(e, FieldAccess):
        return f"{_describe(e.base)}.{e.ordinal}"
    if isinstance(e, Merge):
        return _describe(e.builder)
    if isinstance(e, NewBuilder):
        return str(e.kind)
    return "a builder"


class _LinCtx:
    def __init__(self):
        self.alive: set[_Tok] = set()
        self.created: list[_Tok] = []

    def new_tok(self, root, hint) -> _Tok:
        t = _Tok(root, hint)
        self.alive.add(t)
        self.created.append(t)
        return t

    def consume(self, tok: _Tok, span, hint: str):
        if tok not in self.alive:
            raise LinearityError(
                CONSUMED_TWICE,
                tok.hint or hint,
                f"builder {tok.hint or hint!r} is used after it was already consumed",
                span,
            )
        self.alive.remove(tok)


def check_linearity(e: Expr) -> None:
    """Verify single-use of every builder in a typed tree."""
    ctx = _LinCtx()
    a = _lin(ctx, e, {})
    for t in _toks_in(a):
        ctx.alive.discard(t)
    if ctx.alive:
        tok = next(iter(ctx.alive))
        raise LinearityError(
            UNCONSUMED,
            tok.hint,
            f"builder {tok.hint!r} is never consumed",
            e.span,
        )


def _fresh_abs(ctx: _LinCtx, ty: IrType, hint: str):
    if isinstance(ty, Builder):
        return ctx.new_tok(None, hint)
    if isinstance(ty, Struct) and _is_builderish(ty):
        return tuple(_fresh_abs(ctx, f, f"{hint}.{i}") for i, f in enumerate(ty.fields))
    return None


def _mirror(ctx: _LinCtx, a, path, hint):
    if isinstance(a, _Tok):
        return ctx.new_tok(path, hint)
    if isinstance(a, tuple):
        return tuple(_mirror(ctx, x, path + (i,), f"{hint}.{i}") for i, x in enumerate(a))
    return None


def _roots_of(a):
    if isinstance(a, _Tok):
        return a.root
    if isinstance(a, tuple):
        return tuple(_roots_of(x) for x in a)
    return None


def _lin(ctx: _LinCtx, e: Expr, env: dict):
    span = e.span
    if isinstance(e, Ident):
        return env.get(e.name)

    if isinstance(e, Literal):
        return None

    if isinstance(e, Let):
        v = _lin(ctx, e.value, env)
        return _lin(ctx, e.body, {**env, e.name: v})

    if isinstance(e, Lambda):
        return _lin_lambda_value(ctx, e, env)

    if isinstance(e, Apply):
        f = _lin(ctx, e.func, env)
        args = [_lin(ctx, a, env) for a in e.args]
        if isinstance(f, _LamClo):
            inner = dict(f.env)
            for p, a in zip(f.lam.params, args):
                inner[p.name] = a
            return _lin(ctx, f.lam.body, inner)
        for a, node in zip(args, e.args):
            if _toks_in(a):
                raise LinearityError(
                    CONSUMED_TWICE,
                    _describe(node),
                    "builders cannot be passed to a function the checker cannot see into",
                    span,
                )
        if e.ty is not None and _is_builderish(e.ty):
            return _fresh_abs(ctx, e.ty, "a returned builder")
        return None

    if isinstance(e, MakeStruct):
        return tuple(_lin(ctx, x, env) for x in e.items)

    if isinstance(e, FieldAccess):
        a = _lin(ctx, e.base, env)
        if isinstance(a, tuple):
            return a[e.ordinal]
        return None

    if isinstance(e, NewBuilder):
        if e.arg is not None:
            _lin(ctx, e.arg, env)
        return ctx.new_tok(None, _describe(e))

    if isinstance(e, Merge):
        b = _lin(ctx, e.builder, env)
        _lin(ctx, e.value, env)
        if not isinstance(b, _Tok):
            raise LinearityError(
                CONSUMED_TWICE, _describe(e.builder), "merge needs a live builder", span
            )
        ctx.consume(b, span, _describe(e.builder))
        return ctx.new_tok(b.root, b.hint or _describe(e.builder))

    if isinstance(e, Result):
        a = _lin(ctx, e.builder, env)
        for t in _toks_in(a):
            ctx.consume(t, span, _describe(e.builder))
        if not isinstance(a, (tuple, _Tok)):
            raise LinearityError(
                CONSUMED_TWICE, _describe(e.builder), "result needs a live builder", span
            )
        return None

    if isinstance(e, If):
        _lin(ctx, e.cond, env)
        pre = set(ctx.alive)
        mark1 = len(ctx.created)
        a1 = _lin(ctx, e.on_true, env)
        alive1 = set(ctx.alive)
        _arm_leftover(ctx, mark1, alive1, a1, e.on_true)
        ctx.alive.clear()
        ctx.alive.update(pre)
        mark2 = len(ctx.created)
        a2 = _lin(ctx, e.on_false, env)
        alive2 = set(ctx.alive)
        _arm_leftover(ctx, mark2, alive2, a2, e.on_false)
        # A token is "used" by an arm if the arm consumed it or handed it on
        # through its result; both arms must agree on the set.
        used1 = (pre - alive1) | (pre & set(_toks_in(a1)))
        used2 = (pre - alive2) | (pre & set(_toks_in(a2)))
        if used1 != used2:
            tok = next(iter(used1 ^ used2))
            raise LinearityError(
                UNCONSUMED,
                tok.hint,
                f"builder {tok.hint!r} is consumed on one branch of if but not the other",
                span,
            )
        joined = _join(ctx, a1, a2)
        ctx.alive.clear()
        ctx.alive.update(pre - used1)
        for t in _toks_in(joined):
            ctx.alive.add(t)
        return joined

    if isinstance(e, For):
        for it in e.iters:
            _lin(ctx, it.data, env)
            for b in (it.start, it.end, it.stride):
                if b is not None:
                    _lin(ctx, b, env)
        ab = _lin(ctx, e.builders, env)
        roots = _roots_of(ab)
        hintbase = _describe(e.builders)
        for t in _toks_in(ab):
            ctx.consume(t, span, hintbase)

        f = _lin(ctx, e.func, env) if not isinstance(e.func, Lambda) else _LamClo(e.func, env)
        if not isinstance(f, _LamClo):
            raise LinearityError(
                CONSUMED_TWICE, None, "a loop function must be a lambda expression", span
            )
        lam = f.lam
        mark = len(ctx.created)
        param_abs = _mirror(ctx, ab, (), lam.params[0].name)
        inner = dict(f.env)
        inner[lam.params[0].name] = param_abs
        inner[lam.params[1].name] = None
        inner[lam.params[2].name] = None
        body_abs = _lin(ctx, lam.body, inner)
        _check_derivation(body_abs, param_abs, span)
        result_toks = set(_toks_in(body_abs))
        for t in ctx.created[mark:]:
            if t in ctx.alive and t not in result_toks:
                raise LinearityError(
                    UNCONSUMED,
                    t.hint,
                    f"builder {t.hint!r} is left unconsumed by the loop body",
                    span,
                )
        for t in result_toks:
            ctx.alive.discard(t)
        return _thread_result(ctx, ab, roots, hintbase)

    if isinstance(e, Iterate):
        _lin(ctx, e.init, env)
        _lin(ctx, e.update, env)
        return None

    # Remaining nodes carry no builders through (typing guarantees it);
    # still walk children so lambdas and stray builder uses get checked.
    from .expr import children

    for c in children(e):
        _lin(ctx, c, env)
    return None


def _lin_lambda_value(ctx: _LinCtx, lam: Lambda, env: dict):
    pre = set(ctx.alive)
    mark = len(ctx.created)
    inner = dict(env)
    for p in lam.params:
        pt = p.ty_ann
        if pt is not None and _is_builderish(pt):
            inner[p.name] = _fresh_abs(ctx, pt, p.name)
        else:
            inner[p.name] = None
    a = _lin(ctx, lam.body, inner)
    result_toks = set(_toks_in(a))
    consumed_outer = (pre - ctx.alive) | (pre & result_toks)
    if consumed_outer:
        tok = next(iter(consumed_outer))
        raise LinearityError(
            CONSUMED_TWICE,
            tok.hint,
            f"builder {tok.hint!r} is used inside a function that may run any number of times",
            lam.span,
        )
    for t in ctx.created[mark:]:
        if t in ctx.alive and t not in result_toks:
            raise LinearityError(
                UNCONSUMED,
                t.hint,
                f"builder {t.hint!r} is created inside a function but never consumed",
                lam.span,
            )
    for t in result_toks:
        ctx.alive.discard(t)
    return _LamClo(lam, env)


def _arm_leftover(ctx: _LinCtx, mark: int, alive: set, a, arm: Expr):
    result_toks = set(_toks_in(a))
    for t in ctx.created[mark:]:
        if t in alive and t not in result_toks:
            raise LinearityError(
                UNCONSUMED,
                t.hint,
                f"builder {t.hint!r} is created in a branch but never consumed",
                arm.span,
            )


def _join(ctx: _LinCtx, a, b):
    if isinstance(a, _Tok) and isinstance(b, _Tok):
        root = a.root if a.root == b.root else None
        return ctx.new_tok(root, a.hint or b.hint)
    if isinstance(a, tuple) and isinstance(b, tuple) and len(a) == len(b):
        return tuple(_join(ctx, x, y) for x, y in zip(a, b))
    if isinstance(a, _LamClo) or isinstance(b, _LamClo):
        return None
    return None


def _check_derivation(body_abs, param_abs, span):
    if isinstance(param_abs, _Tok):
        if not isinstance(body_abs, _Tok) or body_abs.root != param_abs.root:
            raise LinearityError(
                LOOP_ESCAPE,
                param_abs.hint,
                "a loop body must return the builder it was given, transformed only by merges",
                span,
            )
        return
    if isinstance(param_abs, tuple):
        if not isinstance(body_abs, tuple) or len(body_abs) != len(param_abs):
            raise LinearityError(
                LOOP_ESCAPE, None, "a loop body must return its builders component-wise", span
            )
        for x, y in zip(body_abs, param_abs):
            _check_derivation(x, y, span)


def _thread_result(ctx: _LinCtx, ab, roots, hint):
    if isinstance(ab, _Tok):
        return ctx.new_tok(roots, hint)
    if isinstance(ab, tuple):
        return tuple(
            _thread_result(ctx, x, r, f"{hint}.{i}")
            for i, (x, r) in enumerate(zip(ab, roots))
        )
    return None
