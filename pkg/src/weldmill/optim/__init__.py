"""IR-to-IR rewrite passes and the pipeline that sequences them."""

from .pipeline import (
    DEFAULT_BUDGET,
    OptLevel,
    PassReport,
    PASS_NAMES,
    optimize,
    render_reports,
)

__all__ = [
    "DEFAULT_BUDGET",
    "OptLevel",
    "PassReport",
    "PASS_NAMES",
    "optimize",
    "render_reports",
]
