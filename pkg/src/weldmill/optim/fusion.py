"""Loop fusion.

Vertical fusion folds a vector-producing loop into the loop that consumes
it, removing the intermediate vector. Horizontal fusion merges independent
loops over the same iteration space into one loop updating a structure of
builders. A handful of cleanup rules collapse the plumbing (projection lets,
structs of results) that horizontal fusion leaves behind, so a fully fused
program prints the way a hand-fused one would.
"""

from dataclasses import replace
from typing import NamedTuple

from ..expr import (
    Expr,
    FieldAccess,
    For,
    Ident,
    If,
    Lambda,
    Let,
    MakeStruct,
    Merge,
    NewBuilder,
    Param,
    Result,
    free_variables,
    fresh_name,
    map_children,
    substitute,
)
from ..types import VecBuilder
from .support import Budget, count_uses, is_pure, use_context


class _Producer(NamedTuple):
    kind: str  # "map" or "filter"
    loop: For
    cond: Expr | None
    value: Expr
    names: tuple[str, str, str]


def _vec_producer(data: Expr) -> _Producer | None:
    """Match result(for(V, vecbuilder, fn)) where fn is a transform or filter."""
    if not isinstance(data, Result) or not isinstance(data.builder, For):
        return None
    loop = data.builder
    if len(loop.iters) != 1 or loop.iters[0].simd:
        return None
    nb = loop.builders
    if not isinstance(nb, NewBuilder) or not isinstance(nb.kind, VecBuilder):
        return None
    lam = loop.func
    if not isinstance(lam, Lambda) or len(lam.params) != 3:
        return None
    bp, ip, xp = (p.name for p in lam.params)
    body = lam.body
    if (
        isinstance(body, Merge)
        and isinstance(body.builder, Ident)
        and body.builder.name == bp
        and is_pure(body.value)
        and bp not in free_variables(body.value)
    ):
        return _Producer("map", loop, None, body.value, (bp, ip, xp))
    if isinstance(body, If):
        t, f = body.on_true, body.on_false
        if (
            isinstance(t, Merge)
            and isinstance(t.builder, Ident)
            and t.builder.name == bp
            and isinstance(f, Ident)
            and f.name == bp
            and is_pure(body.cond)
            and is_pure(t.value)
            and bp not in free_variables(body.cond) | free_variables(t.value)
        ):
            return _Producer("filter", loop, body.cond, t.value, (bp, ip, xp))
    return None


def _fuse_vertical(outer: Expr):
    if not isinstance(outer, For) or len(outer.iters) != 1:
        return None
    it = outer.iters[0]
    if it.simd or it.start is not None:
        return None
    prod = _vec_producer(it.data)
    if prod is None:
        return None
    lam = outer.func
    if not isinstance(lam, Lambda) or len(lam.params) != 3:
        return None
    b2, i2, x2 = (p.name for p in lam.params)
    inner_it = prod.loop.iters[0]
    idx_used = count_uses(lam.body, i2) > 0
    if idx_used and prod.kind == "filter":
        # positions shift through a filter, so the consumer's index is gone
        return None
    if idx_used and inner_it.start is not None:
        # a strided source renumbers elements relative to the intermediate
        return None
    nb, ni, nx = fresh_name("b"), fresh_name("i"), fresh_name("x")
    bp, ip, xp = prod.names
    remap = {ip: Ident(ni), xp: Ident(nx)}
    value = substitute(prod.value, remap)
    body = substitute(lam.body, {b2: Ident(nb), i2: Ident(ni), x2: value})
    if prod.kind == "filter":
        body = If(cond=substitute(prod.cond, remap), on_true=body, on_false=Ident(nb))
    func = Lambda(params=(Param(nb, None), Param(ni, None), Param(nx, None)), body=body)
    return For(iters=(inner_it,), builders=outer.builders, func=func)


def _push_producer_let(e: Expr):
    """Move a single-use produced vector to the loop that iterates it.

    The binding itself is not pure (it runs a loop), but the loop only
    touches its own internal builder, so sliding it past unrelated work is
    invisible. This is what lets the vertical pattern see through lets. It
    only fires when some loop iterates the bound name, since a vector whose
    one use is anything else gains nothing from moving and may be sitting in
    a chain the horizontal rules want intact.
    """
    if not isinstance(e, Let) or _vec_producer(e.value) is None:
        return None
    if count_uses(e.body, e.name) != 1:
        return None
    lam, cond = use_context(e.body, e.name)
    if lam or cond:
        return None
    from ..expr import walk

    consumed = any(
        isinstance(it.data, Ident) and it.data.name == e.name
        for n in walk(e.body)
        if isinstance(n, For)
        for it in n.iters
    )
    if not consumed:
        return None
    return substitute(e.body, {e.name: e.value})


# ---------------------------------------------------------------------------
# Horizontal fusion
# ---------------------------------------------------------------------------


class _HLoop(NamedTuple):
    loop: For
    slots: tuple[NewBuilder, ...]
    lam: Lambda


def _hloop(loop: Expr) -> _HLoop | None:
    if not isinstance(loop, For) or len(loop.iters) != 1:
        return None
    it = loop.iters[0]
    if it.simd or not is_pure(it.data):
        return None
    for b in (it.start, it.end, it.stride):
        if b is not None and not is_pure(b):
            return None
    bs = loop.builders
    if isinstance(bs, NewBuilder):
        slots: tuple[NewBuilder, ...] = (bs,)
    elif isinstance(bs, MakeStruct) and all(isinstance(x, NewBuilder) for x in bs.items):
        slots = tuple(bs.items)
    else:
        return None
    for s in slots:
        if s.arg is not None and not is_pure(s.arg):
            return None
    lam = loop.func
    if not isinstance(lam, Lambda) or len(lam.params) != 3:
        return None
    return _HLoop(loop, slots, lam)


def _fuse_group(members: list[_HLoop]) -> tuple[For, list[int], list[int]]:
    """Combine loops over one iteration space into a struct-of-builders loop."""
    nb, ni, nx = fresh_name("b"), fresh_name("i"), fresh_name("x")
    slots: list[NewBuilder] = []
    offsets: list[int] = []
    for m in members:
        offsets.append(len(slots))
        slots.extend(m.slots)
    fields: list[Expr] = []
    lets: list[tuple[str, Expr]] = []
    for m, off in zip(members, offsets):
        bp, ip, xp = (p.name for p in m.lam.params)
        k = len(m.slots)
        if k == 1:
            proj: Expr = FieldAccess(Ident(nb), off)
        else:
            proj = MakeStruct(tuple(FieldAccess(Ident(nb), off + j) for j in range(k)))
        part = substitute(m.lam.body, {bp: proj, ip: Ident(ni), xp: Ident(nx)})
        if k == 1:
            fields.append(part)
        else:
            tmp = fresh_name("part")
            lets.append((tmp, part))
            fields.extend(FieldAccess(Ident(tmp), j) for j in range(k))
    body: Expr = MakeStruct(tuple(fields))
    for name, value in reversed(lets):
        body = Let(name, value, body)
    func = Lambda(params=(Param(nb, None), Param(ni, None), Param(nx, None)), body=body)
    combined = For(
        iters=(members[0].loop.iters[0],),
        builders=MakeStruct(tuple(slots)),
        func=func,
    )
    return combined, offsets, [len(m.slots) for m in members]


def _result_proj(t: str, off: int, k: int) -> Expr:
    if k == 1:
        return Result(FieldAccess(Ident(t), off))
    return MakeStruct(tuple(Result(FieldAccess(Ident(t), off + j)) for j in range(k)))


def _fuse_let_run(e: Expr):
    """Fuse a chain of lets binding results of loops over the same space."""
    if not isinstance(e, Let):
        return None
    run: list[tuple[str, _HLoop, Let]] = []
    cur: Expr = e
    while isinstance(cur, Let) and isinstance(cur.value, Result):
        hl = _hloop(cur.value.builder)
        if hl is None:
            break
        run.append((cur.name, hl, cur))
        cur = cur.body
    if len(run) < 2:
        return None
    rest = cur

    group: list[int] = []
    for i in range(len(run)):
        base = run[i][1].loop.iters[0]
        group = [i]
        for j in range(i + 1, len(run)):
            if run[j][1].loop.iters[0] != base:
                continue
            earlier = {run[k][0] for k in range(j)}
            if free_variables(run[j][1].loop) & earlier:
                continue
            group.append(j)
        if len(group) >= 2:
            break
    else:
        return None
    if len(group) < 2:
        return None

    t = fresh_name("fused")
    combined, offsets, widths = _fuse_group([run[j][1] for j in group])
    projs = {j: _result_proj(t, offsets[pos], widths[pos]) for pos, j in enumerate(group)}
    body = rest
    for j in range(len(run) - 1, -1, -1):
        name, _, orig = run[j]
        body = Let(name, projs.get(j, orig.value), body)
        if j == group[0]:
            body = Let(t, combined, body)
    return body


def _fuse_struct_items(e: Expr):
    """Fuse result(...) loops sitting side by side in one struct literal."""
    if not isinstance(e, MakeStruct):
        return None
    cands: list[tuple[int, _HLoop]] = []
    for i, item in enumerate(e.items):
        if isinstance(item, Result):
            hl = _hloop(item.builder)
            if hl is not None:
                cands.append((i, hl))
    group: list[tuple[int, _HLoop]] = []
    for start in range(len(cands)):
        base = cands[start][1].loop.iters[0]
        group = [cands[start]]
        group += [c for c in cands[start + 1 :] if c[1].loop.iters[0] == base]
        if len(group) >= 2:
            break
    else:
        return None
    if len(group) < 2:
        return None

    t = fresh_name("fused")
    combined, offsets, widths = _fuse_group([hl for _, hl in group])
    items = list(e.items)
    for pos, (i, _) in enumerate(group):
        items[i] = _result_proj(t, offsets[pos], widths[pos])
    return Let(t, combined, replace(e, items=tuple(items)))


# ---------------------------------------------------------------------------
# Cleanups: collapse the wiring the rewrites above introduce.
# ---------------------------------------------------------------------------


def _let_of_ident_body(e: Expr):
    if isinstance(e, Let) and isinstance(e.body, Ident) and e.body.name == e.name:
        return e.value
    return None


def _let_of_result_body(e: Expr):
    if (
        isinstance(e, Let)
        and isinstance(e.body, Result)
        and isinstance(e.body.builder, Ident)
        and e.body.builder.name == e.name
    ):
        return Result(e.value)
    return None


def _push_result_let(e: Expr):
    # Same sliding argument as _push_producer_let, for any result(...) value.
    # Results of whole loops are left alone: those lets are what the run and
    # struct matchers above feed on, and pushing one would hide it from them.
    if not isinstance(e, Let) or not isinstance(e.value, Result):
        return None
    if isinstance(e.value.builder, For) and _hloop(e.value.builder) is not None:
        return None
    if count_uses(e.body, e.name) != 1:
        return None
    lam, cond = use_context(e.body, e.name)
    if lam or cond:
        return None
    return substitute(e.body, {e.name: e.value})


def _replace_once(e: Expr, target: Expr, repl: Expr) -> tuple[Expr, bool]:
    hit = False

    def go(n: Expr) -> Expr:
        nonlocal hit
        if hit:
            return n
        if n == target:
            hit = True
            return repl
        return map_children(n, go)

    return go(e), hit


def _collapse_result_struct(e: Expr):
    """{result(t.0), ..., result(t.k-1)} -> result(t) under t's binding."""
    if not isinstance(e, Let) or not isinstance(e.value, For):
        return None
    bs = e.value.builders
    if not isinstance(bs, MakeStruct):
        return None
    k = len(bs.items)
    if count_uses(e.body, e.name) != k:
        return None
    pattern = MakeStruct(tuple(Result(FieldAccess(Ident(e.name), j)) for j in range(k)))
    body, hit = _replace_once(e.body, pattern, Result(Ident(e.name)))
    if not hit:
        return None
    return replace(e, body=body)


_VERTICAL = (_fuse_vertical, _push_producer_let)

# Grouping wants the widest view, so it runs outermost-first: a let chain of
# k sibling loops fuses in one firing instead of pairwise from the inside.
_GROUPING = (_fuse_let_run, _fuse_struct_items)
_CLEANUP = (
    _let_of_ident_body,
    _let_of_result_body,
    _collapse_result_struct,
    _push_result_let,
)


def run(e: Expr, budget: Budget) -> tuple[Expr, int]:
    from .support import rewrite_bottom_up, rewrite_top_down

    total = 0
    while True:
        before = total
        while True:
            counter = [0]
            e = rewrite_bottom_up(e, budget, _VERTICAL, counter)
            total += counter[0]
            if counter[0] == 0:
                break
        counter = [0]
        e = rewrite_top_down(e, budget, _GROUPING, counter)
        e = rewrite_bottom_up(e, budget, _CLEANUP, counter)
        total += counter[0]
        if total == before:
            return e, total
