"""Runtime evaluation of core programs."""

from .builders import (
    GLOBAL,
    LOCAL,
    SHARED,
    STRATEGIES,
    BuilderState,
    payload_bytes,
)
from .run import Closure, EngineConfig, TaskRange, Value, evaluate
from .stats import EvalStats, evaluation_count

__all__ = [
    "BuilderState",
    "Closure",
    "EngineConfig",
    "EvalStats",
    "GLOBAL",
    "LOCAL",
    "SHARED",
    "STRATEGIES",
    "TaskRange",
    "Value",
    "evaluate",
    "evaluation_count",
    "payload_bytes",
]
