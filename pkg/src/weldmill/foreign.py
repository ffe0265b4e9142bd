"""Flat handle-based call surface over the object API.

This is the boundary other languages (or other processes) program against:
every argument and return is an integer handle, a byte string, or plain
text. Objects are referred to by opaque 64-bit ids, values travel in the
boundary byte format, and IR fragments and types travel as source text in
the surface grammar. Nothing here adds semantics; each call forwards to the
object API and translates between handles and objects.

Handles stay valid after freeing so that misuse is reported as UseAfterFree
or DoubleFree rather than as an unknown handle.
"""

from __future__ import annotations

import itertools
import threading

from . import api
from .boundary import decode_value
from .engine import EngineConfig, evaluation_count
from .errors import ApiError
from .optim import OptLevel
from .parser import parse_type_text
from .printer import print_type

_lock = threading.Lock()
_handles = itertools.count(1)
_objects: dict[int, api.WeldObject] = {}
_results: dict[int, api.WeldResult] = {}


def _register(table, item) -> int:
    with _lock:
        h = next(_handles)
        table[h] = item
    return h


def _object(h: int) -> api.WeldObject:
    try:
        return _objects[h]
    except KeyError:
        raise ApiError(f"unknown object handle {h}") from None


def _result(h: int) -> api.WeldResult:
    try:
        return _results[h]
    except KeyError:
        raise ApiError(f"unknown result handle {h}") from None


def weld_new_data(type_text: str, data: bytes) -> int:
    """Create a data leaf from boundary bytes; returns its handle."""
    ty = parse_type_text(type_text)
    host = decode_value(data, ty)
    return _register(_objects, api.new_data_object(host, ty))


def weld_new_computed(deps, fragment: str, result_type: str | None = None) -> int:
    """Create a computed object over dependency handles.

    The fragment refers to the dependencies positionally as v0..vk.
    """
    objs = [_object(h) for h in deps]
    declared = parse_type_text(result_type) if result_type else None
    return _register(_objects, api.new_computed_object(objs, fragment, declared))


def weld_object_type(h: int) -> str:
    return print_type(api.get_object_type(_object(h)))


def weld_evaluate(
    h: int,
    threads: int = 1,
    memory_limit: int | None = None,
    strategy: str = "local",
    optimize: bool = True,
) -> int:
    """Evaluate an object's DAG; returns a result handle."""
    config = EngineConfig(threads=threads, strategy=strategy)
    if memory_limit is not None:
        config.memory_limit = memory_limit
    level = OptLevel.all() if optimize else OptLevel.none()
    result = api.evaluate_object(_object(h), config, level)
    return _register(_results, result)


def weld_result_error(h: int) -> str | None:
    """None when the result holds a value, else 'stage: message'."""
    r = _result(h)
    err = r.error
    if err is None:
        return None
    return f"{err.stage}: {err.cause}"


def weld_result_type(h: int) -> str:
    return print_type(_result(h).result_type())


def weld_result_bytes(h: int) -> bytes:
    return _result(h).result_bytes()


def weld_free_object(h: int) -> None:
    api.free_object(_object(h))


def weld_free_result(h: int) -> None:
    api.free_result(_result(h))


def weld_eval_count() -> int:
    """Total engine evaluations in this process; the laziness witness."""
    return evaluation_count()
