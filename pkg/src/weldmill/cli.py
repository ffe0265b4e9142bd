"""Command-line front door: run, check, optimize, and format programs.

Exit codes: 0 on success, 1 when the pipeline rejects the program or the
run fails (a JSON diagnostic goes to standard error), 2 for usage problems
such as malformed flags or a manifest that does not match the program.

Input values arrive through a manifest file (--inputs): a JSON array of
parameter descriptors. Each entry names a program variable, gives its type
in the surface type syntax, and supplies the value either inline as JSON
or as a path to a file in the boundary byte format:

    [{"name": "v0", "type": "vec[i64]", "value": [600000, 400000, 700000]},
     {"name": "v1", "type": "vec[f64]", "path": "prices.bin"}]

JSON can carry 64-bit integers exactly only up to 2^53 in magnitude if a
reader goes through doubles; values beyond that should use binary files.
Output JSON is positional: structures print as arrays, in field order.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .api import evaluate_object, new_computed_object, new_data_object
from .boundary import decode_value
from .engine import EngineConfig, STRATEGIES
from .errors import EncodeError, ParseError, StagedError, WeldError
from .errors import STAGE_EXPAND, STAGE_LINEARITY, STAGE_OPTIMIZE, STAGE_PARSE, STAGE_TYPE
from .expr import free_variables
from .optim import OptLevel, optimize, render_reports
from .parser import parse, parse_type_text
from .printer import print_expr, print_type
from .sugar import expand
from .typecheck import check_linearity, infer
from .types import BOOL, F32, F64, I32, I64, IrType, Scalar, Struct, Vec


class _Usage(Exception):
    """A problem with how the tool was invoked, not with the program."""


def _fail_usage(message: str):
    raise _Usage(message)


def _error_json(stage: str, err: Exception) -> str:
    span = getattr(err, "span", None)
    return json.dumps(
        {
            "stage": stage,
            "error": type(err).__name__,
            "message": str(err),
            "span": list(span) if span else None,
        }
    )


class _Staged(Exception):
    def __init__(self, stage: str, err: Exception):
        super().__init__(str(err))
        self.stage = stage
        self.err = err


def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return f.read()
    except OSError as err:
        _fail_usage(f"cannot read {path}: {err.strerror or err}")


def _parse_program(src: str):
    try:
        return parse(src)
    except ParseError as err:
        raise _Staged(STAGE_PARSE, err) from err


def value_to_json(value, ty: IrType):
    """Host value -> JSON-ready structure, shaped by its type."""
    if isinstance(ty, Scalar):
        if ty.kind == BOOL:
            return bool(value)
        if ty.kind in (I32, I64):
            return int(value)
        return float(value)
    if isinstance(ty, Vec):
        return [value_to_json(v, ty.elem) for v in value]
    if isinstance(ty, Struct):
        return [value_to_json(v, ft) for v, ft in zip(value, ty.fields)]
    raise EncodeError(f"type {ty} has no JSON form")


def json_to_value(j, ty: IrType):
    """JSON structure -> host value of the given type, strictly shaped."""
    if isinstance(ty, Scalar):
        if ty.kind == BOOL:
            if not isinstance(j, bool):
                raise ValueError(f"expected true/false for {ty}, got {j!r}")
            return j
        if ty.kind in (I32, I64):
            if isinstance(j, bool) or not isinstance(j, int):
                raise ValueError(f"expected an integer for {ty}, got {j!r}")
            return j
        if ty.kind in (F32, F64):
            if isinstance(j, bool) or not isinstance(j, (int, float)):
                raise ValueError(f"expected a number for {ty}, got {j!r}")
            return float(j)
    if isinstance(ty, Vec):
        if not isinstance(j, list):
            raise ValueError(f"expected an array for {ty}, got {j!r}")
        return [json_to_value(v, ty.elem) for v in j]
    if isinstance(ty, Struct):
        if not isinstance(j, list) or len(j) != len(ty.fields):
            raise ValueError(f"expected an array of {len(ty.fields)} for {ty}")
        return tuple(json_to_value(v, ft) for v, ft in zip(j, ty.fields))
    raise ValueError(f"type {ty} cannot be read from JSON")


def _load_manifest(path: str) -> list[tuple[str, IrType, object]]:
    text = _read_text(path)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        _fail_usage(f"manifest {path} is not valid JSON: {err}")
    if not isinstance(raw, list):
        _fail_usage(f"manifest {path} must be a JSON array of entries")
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    seen = set()
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict) or "name" not in entry or "type" not in entry:
            _fail_usage(f"manifest entry {i} needs 'name' and 'type' fields")
        name = entry["name"]
        if name in seen:
            _fail_usage(f"manifest names {name!r} twice")
        seen.add(name)
        try:
            ty = parse_type_text(entry["type"])
        except (ParseError, WeldError) as err:
            _fail_usage(f"manifest entry {name!r} has a bad type: {err}")
        if ("value" in entry) == ("path" in entry):
            _fail_usage(f"manifest entry {name!r} needs exactly one of 'value' or 'path'")
        try:
            if "value" in entry:
                value = json_to_value(entry["value"], ty)
            else:
                file_path = os.path.join(base, entry["path"])
                with open(file_path, "rb") as f:
                    value = decode_value(f.read(), ty)
        except (ValueError, OSError, EncodeError) as err:
            _fail_usage(f"manifest entry {name!r}: {err}")
        entries.append((name, ty, value))
    return entries


def _check_coverage(program_vars: set, entries) -> None:
    provided = {name for name, _, _ in entries}
    missing = sorted(program_vars - provided)
    if missing:
        _fail_usage(f"no input provided for program variable {missing[0]!r}")
    extra = sorted(provided - program_vars)
    if extra:
        _fail_usage(f"manifest entry {extra[0]!r} does not appear in the program")


def _level_from(args) -> OptLevel:
    if getattr(args, "no_opt", False) or args.opt_level == "0":
        return OptLevel.none()
    level = OptLevel.all()
    for name in ("fuse", "cse", "predicate", "vectorize", "size-analysis", "inline"):
        if getattr(args, "no_" + name.replace("-", "_"), False):
            level = level.disable(name)
    return level


def _config_from(args) -> EngineConfig:
    config = EngineConfig(threads=args.threads, strategy=args.strategy)
    if args.memory_limit is not None:
        config.memory_limit = args.memory_limit
    return config


def _cmd_run(args) -> int:
    src = _read_text(args.file)
    program = _parse_program(src)
    program_vars = free_variables(program)
    entries = _load_manifest(args.inputs) if args.inputs else []
    if program_vars or entries:
        if not args.inputs:
            name = sorted(program_vars)[0]
            _fail_usage(f"no input provided for program variable {name!r}; pass --inputs")
        _check_coverage(program_vars, entries)
    leaves = {name: new_data_object(value, ty) for name, ty, value in entries}
    obj = (
        new_computed_object(leaves, program)
        if leaves
        else new_computed_object([], program)
    )
    result = evaluate_object(obj, _config_from(args), _level_from(args))
    if result.error is not None:
        raise _Staged(result.error.stage, result.error.cause)
    print(json.dumps(value_to_json(result.value(), result.result_type())))
    if args.stats:
        print(result.stats.render())
    if args.out:
        with open(args.out, "wb") as f:
            f.write(result.result_bytes())
    return 0


def _front(src: str, entries):
    """parse + expand + infer + linearity, with staged diagnostics."""
    program = _parse_program(src)
    env = {name: ty for name, ty, _ in entries}
    try:
        expanded = expand(program)
    except WeldError as err:
        raise _Staged(STAGE_EXPAND, err) from err
    try:
        typed = infer(expanded, env)
    except WeldError as err:
        raise _Staged(STAGE_TYPE, err) from err
    try:
        check_linearity(typed)
    except WeldError as err:
        raise _Staged(STAGE_LINEARITY, err) from err
    return typed


def _cmd_check(args) -> int:
    entries = _load_manifest(args.inputs) if args.inputs else []
    typed = _front(_read_text(args.file), entries)
    print(print_type(typed.ty))
    return 0


def _cmd_opt(args) -> int:
    entries = _load_manifest(args.inputs) if args.inputs else []
    typed = _front(_read_text(args.file), entries)
    try:
        optimized, reports = optimize(typed, _level_from(args))
    except WeldError as err:
        raise _Staged(STAGE_OPTIMIZE, err) from err
    print(print_expr(optimized))
    if args.dump_passes:
        print(render_reports(reports))
    return 0


def _cmd_fmt(args) -> int:
    program = _parse_program(_read_text(args.file))
    print(print_expr(program))
    return 0


def _build_argparser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="weldmill",
        description="Run, check, optimize, or format loop-and-builder IR programs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_engine: bool, with_opt: bool):
        p.add_argument("file", help="program file")
        p.add_argument("--inputs", help="input manifest (JSON)")
        if with_engine:
            p.add_argument("--threads", type=int, default=1)
            p.add_argument("--memory-limit", type=int, default=None)
            p.add_argument("--strategy", choices=STRATEGIES, default="local")
        if with_opt:
            p.add_argument("-O", dest="opt_level", choices=["0", "3"], default="3")
            p.add_argument("--no-opt", action="store_true", help="same as -O0")
            for name in ("fuse", "cse", "predicate", "vectorize", "size-analysis", "inline"):
                p.add_argument(f"--no-{name}", action="store_true", dest="no_" + name.replace("-", "_"))

    run = sub.add_parser("run", help="evaluate a program over manifest inputs")
    common(run, with_engine=True, with_opt=True)
    run.add_argument("--stats", action="store_true", help="print evaluation counters")
    run.add_argument("--out", help="also write the result in boundary byte form")
    run.set_defaults(fn=_cmd_run)

    check = sub.add_parser("check", help="type-check a program and print its type")
    common(check, with_engine=False, with_opt=False)
    check.set_defaults(fn=_cmd_check)

    opt = sub.add_parser("opt", help="print the optimized program")
    common(opt, with_engine=False, with_opt=True)
    opt.add_argument("--dump-passes", action="store_true", help="print per-pass reports")
    opt.set_defaults(fn=_cmd_opt)

    fmt = sub.add_parser("fmt", help="reprint a program in canonical form")
    common(fmt, with_engine=False, with_opt=False)
    fmt.set_defaults(fn=_cmd_fmt)
    return parser


def main(argv=None) -> int:
    parser = _build_argparser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _Usage as err:
        print(f"weldmill: {err}", file=sys.stderr)
        return 2
    except _Staged as err:
        print(_error_json(err.stage, err.err), file=sys.stderr)
        return 1
    except StagedError as err:
        print(_error_json(err.stage, err.cause), file=sys.stderr)
        return 1
    except WeldError as err:
        print(_error_json("api", err), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
