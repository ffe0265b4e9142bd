"""Lazy array client for the weldmill runtime.

Build arrays, chain transformations, and nothing runs until a value is
demanded; the whole chain then crosses the boundary as one program and
is evaluated in a single call.

    from weldclient import LazyArray, weld

    xs = LazyArray([600000, 400000, 700000])
    total = xs.filter(xs > 500000).sum()   # nothing has run yet
    print(total)                           # one evaluation: 1300000

    @weld("(i64) => i64")
    def successor(x):
        return x + 1

    print(xs.map(successor))               # [600001, 400001, 700001]
"""

from .boundary import decode, encode
from .errors import ClientError, EvaluationFailed, MarshalError, TranslationError
from .lazy import LazyArray, LazyScalar
from .transport import (
    ForeignTransport,
    SubprocessTransport,
    Transport,
    default_transport,
    set_default_transport,
)
from .typetext import parse_type
from .udf import Udf, UdfSignature, translate, weld

__all__ = [
    "ClientError",
    "EvaluationFailed",
    "ForeignTransport",
    "LazyArray",
    "LazyScalar",
    "MarshalError",
    "SubprocessTransport",
    "TranslationError",
    "Transport",
    "Udf",
    "UdfSignature",
    "decode",
    "default_transport",
    "encode",
    "parse_type",
    "set_default_transport",
    "translate",
    "weld",
]
