"""Error taxonomy shared by every stage of the pipeline.

Each stage raises a subclass of WeldError; the API layer wraps whatever it
catches in a StagedError so callers can tell which stage rejected a program.
"""
from __future__ import annotations


class WeldError(Exception):
    """Base class for every error this package raises deliberately."""


class WellFormednessError(WeldError):
    def __init__(self, message: str, span=None):
        super().__init__(message)
        self.span = span


class ParseError(WeldError):
    def __init__(self, message: str, span=None, expected=None):
        super().__init__(message)
        self.span = span
        self.expected = expected

    def __str__(self):
        base = super().__str__()
        if self.span is not None:
            base += f" (at bytes {self.span[0]}..{self.span[1]})"
        if self.expected:
            base += f"; expected {self.expected}"
        return base


class TypeCheckError(WeldError):
    def __init__(self, message: str, span=None, left=None, right=None):
        super().__init__(message)
        self.span = span
        self.left = left
        self.right = right


# The three ways a program can violate the single-use builder discipline.
CONSUMED_TWICE = "consumed-twice"
UNCONSUMED = "unconsumed-on-path"
LOOP_ESCAPE = "loop-body-escape"


class LinearityError(WeldError):
    def __init__(self, kind: str, var: str | None, message: str, span=None):
        super().__init__(message)
        self.kind = kind
        self.var = var
        self.span = span


class SugarError(WeldError):
    pass


class OptimizeError(WeldError):
    pass


class RewriteBudgetExceeded(OptimizeError):
    def __init__(self, pass_name: str, budget: int):
        super().__init__(f"pass {pass_name!r} exceeded its rewrite budget of {budget}")
        self.pass_name = pass_name
        self.budget = budget


class EvalError(WeldError):
    """Base for runtime failures inside the engine."""


class MemoryLimitExceeded(EvalError):
    pass


class IndexOutOfBounds(EvalError):
    pass


class KeyNotFound(EvalError):
    pass


class DivideByZero(EvalError):
    pass


class ExternCallUnknown(EvalError):
    pass


class ZipLengthMismatch(EvalError):
    pass


class UseAfterResult(EvalError):
    pass


class IterationLimit(EvalError):
    pass


class ApiError(WeldError):
    pass


class UnsupportedBoundaryType(ApiError):
    pass


class UndeclaredDependency(ApiError):
    pass


class CycleDetected(ApiError):
    pass


class UseAfterFree(ApiError):
    pass


class DoubleFree(ApiError):
    pass


class EvaluateUnsupportedResultType(ApiError):
    pass


class EncodeError(ApiError):
    pass


# Stage names used by StagedError / the CLI error JSON.
STAGE_BUILD = "build"
STAGE_PARSE = "parse"
STAGE_EXPAND = "expand"
STAGE_TYPE = "typecheck"
STAGE_LINEARITY = "linearity"
STAGE_OPTIMIZE = "optimize"
STAGE_EVAL = "evaluate"
STAGE_ENCODE = "encode"


class StagedError(WeldError):
    """Wraps an underlying error with the pipeline stage that produced it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
