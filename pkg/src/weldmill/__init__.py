"""weldmill: a loop-and-builder IR with a parser, optimizer, parallel
interpreter, and a lazy composition API.

The pieces compose as a pipeline: parse text into expression trees, expand
the sugared vector forms, infer types and check builder linearity, rewrite
with the optimizer, and evaluate on the task-parallel engine. The api
module wraps the whole pipeline behind lazily evaluated objects, and the
foreign module flattens that into a handle-based surface other processes
and languages can call.
"""

from .api import (
    DEFAULT_ENCODER,
    Encoder,
    WeldObject,
    WeldResult,
    build_program,
    evaluate_object,
    free_object,
    free_result,
    get_object_type,
    new_computed_object,
    new_data_object,
)
from .boundary import decode_value, encode_value, ensure_boundary_type
from .engine import EngineConfig, EvalStats, TaskRange, Value, evaluate, evaluation_count
from .errors import (
    ApiError,
    CycleDetected,
    DoubleFree,
    EncodeError,
    EvalError,
    EvaluateUnsupportedResultType,
    LinearityError,
    MemoryLimitExceeded,
    OptimizeError,
    ParseError,
    RewriteBudgetExceeded,
    StagedError,
    SugarError,
    TypeCheckError,
    UndeclaredDependency,
    UnsupportedBoundaryType,
    UseAfterFree,
    WeldError,
)
from .expr import Expr
from .optim import OptLevel, PassReport, optimize, render_reports
from .parser import parse, parse_type_text
from .printer import print_expr, print_type
from .sugar import expand
from .typecheck import check_linearity, infer
from .types import (
    Builder,
    Dict,
    DictMerger,
    Function,
    GroupBuilder,
    IrType,
    Merger,
    Scalar,
    Simd,
    Struct,
    Vec,
    VecBuilder,
    VecMerger,
)

__version__ = "0.1.0"

__all__ = [
    "ApiError",
    "Builder",
    "CycleDetected",
    "DEFAULT_ENCODER",
    "Dict",
    "DictMerger",
    "DoubleFree",
    "EncodeError",
    "Encoder",
    "EngineConfig",
    "EvalError",
    "EvalStats",
    "EvaluateUnsupportedResultType",
    "Expr",
    "Function",
    "GroupBuilder",
    "IrType",
    "LinearityError",
    "MemoryLimitExceeded",
    "Merger",
    "OptLevel",
    "OptimizeError",
    "ParseError",
    "PassReport",
    "RewriteBudgetExceeded",
    "Scalar",
    "Simd",
    "StagedError",
    "Struct",
    "SugarError",
    "TaskRange",
    "TypeCheckError",
    "UndeclaredDependency",
    "UnsupportedBoundaryType",
    "UseAfterFree",
    "Value",
    "Vec",
    "VecBuilder",
    "VecMerger",
    "WeldError",
    "WeldObject",
    "WeldResult",
    "build_program",
    "check_linearity",
    "decode_value",
    "encode_value",
    "ensure_boundary_type",
    "evaluate",
    "evaluate_object",
    "evaluation_count",
    "expand",
    "free_object",
    "free_result",
    "get_object_type",
    "infer",
    "new_computed_object",
    "new_data_object",
    "optimize",
    "parse",
    "parse_type_text",
    "print_expr",
    "print_type",
    "render_reports",
]
