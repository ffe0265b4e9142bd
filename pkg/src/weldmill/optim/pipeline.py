"""The optimization pipeline.

Passes run in a fixed order, each to its own fixpoint under a rewrite
budget. Between passes the tree is re-typechecked and re-checked for
builder linearity, so a pass that produces garbage fails loudly here rather
than downstream in the engine.
"""

from dataclasses import dataclass, replace as _dc_replace

from ..errors import LinearityError, OptimizeError, TypeCheckError
from ..expr import Expr, Ident, Lambda, Let, children
from ..typecheck import check_linearity, infer
from . import cse, fusion, inline, predicate, sizes, vectorize
from .support import Budget, loop_count

DEFAULT_BUDGET = 10_000

# kebab-case pass names, as they appear in reports and CLI flags
PASS_NAMES = (
    "inline",
    "fuse",
    "size-analysis",
    "loop-tiling",
    "predicate",
    "vectorize",
    "cse",
)

_FLAG_FOR = {
    "inline": "inline",
    "fuse": "fuse",
    "size-analysis": "size_analysis",
    "predicate": "predicate",
    "vectorize": "vectorize",
    "cse": "cse",
}


@dataclass(frozen=True)
class OptLevel:
    """Which passes run. The order they run in never changes."""

    inline: bool = True
    fuse: bool = True
    size_analysis: bool = True
    predicate: bool = True
    vectorize: bool = True
    cse: bool = True

    @classmethod
    def all(cls) -> "OptLevel":
        return cls()

    @classmethod
    def none(cls) -> "OptLevel":
        return cls(False, False, False, False, False, False)

    def disable(self, pass_name: str) -> "OptLevel":
        flag = _FLAG_FOR.get(pass_name)
        if flag is None:
            raise OptimizeError(f"no such pass: {pass_name!r}")
        return _dc_replace(self, **{flag: False})


@dataclass(frozen=True)
class PassReport:
    name: str
    rewrites: int
    loops_before: int
    loops_after: int
    sizes: tuple[str, ...] = ()
    vectorized: int = 0

    def render(self) -> str:
        out = f"pass {self.name}: rewrites={self.rewrites} loops={self.loops_before}->{self.loops_after}"
        if self.sizes:
            out += " sizes=[" + ", ".join(self.sizes) + "]"
        if self.vectorized:
            out += f" vectorized={self.vectorized}"
        return out


def render_reports(reports) -> str:
    return "\n".join(r.render() for r in reports)


def _free_ident_types(e: Expr) -> dict:
    out: dict = {}

    def go(n: Expr, bound: frozenset) -> None:
        if isinstance(n, Ident):
            if n.name not in bound and n.ty is not None:
                out.setdefault(n.name, n.ty)
            return
        if isinstance(n, Let):
            go(n.value, bound)
            go(n.body, bound | {n.name})
            return
        if isinstance(n, Lambda):
            go(n.body, bound | {p.name for p in n.params})
            return
        for c in children(n):
            go(c, bound)

    go(e, frozenset())
    return out


def _recheck(e: Expr, env: dict, pass_name: str, check: bool) -> Expr:
    try:
        e = infer(e, env)
        if check:
            check_linearity(e)
        return e
    except (TypeCheckError, LinearityError) as exc:
        raise OptimizeError(f"pass {pass_name!r} produced an invalid program: {exc}") from exc


def optimize(
    e: Expr,
    level: OptLevel | None = None,
    budget: int = DEFAULT_BUDGET,
    check: bool = True,
) -> tuple[Expr, list[PassReport]]:
    """Run the pipeline over a typed program.

    Returns the rewritten (and re-typechecked) program plus one report per
    pass slot, including disabled passes and the loop-tiling slot, which is
    registered but performs no rewrites.
    """
    if level is None:
        level = OptLevel.all()
    if e.ty is None:
        raise OptimizeError("optimize needs a typechecked program")
    env = _free_ident_types(e)
    reports: list[PassReport] = []

    for name in PASS_NAMES:
        before = loop_count(e)
        flag = _FLAG_FOR.get(name)
        enabled = flag is not None and getattr(level, flag)
        if not enabled:
            reports.append(PassReport(name, 0, before, before))
            continue

        b = Budget(name, budget)
        sizes_out: tuple[str, ...] = ()
        vectorized = 0
        if name == "inline":
            e2, rewrites = inline.run(e, b)
        elif name == "fuse":
            e2, rewrites = fusion.run(e, b)
        elif name == "size-analysis":
            e2, rewrites, found = sizes.run(e, b)
            sizes_out = tuple(found)
        elif name == "predicate":
            e2, rewrites = predicate.run(e, b)
        elif name == "vectorize":
            e2, rewrites = vectorize.run(e, b)
            vectorized = rewrites
        else:
            e2, rewrites = cse.run(e, b)

        if rewrites:
            e2 = _recheck(e2, env, name, check)
        reports.append(PassReport(name, rewrites, before, loop_count(e2), sizes_out, vectorized))
        e = e2

    return e, reports
