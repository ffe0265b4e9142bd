"""How composed computations reach the runtime.

Two interchangeable transports sit behind the lazy containers:

* `ForeignTransport` calls the runtime's flat handle surface in process.
  This is the default: composition and evaluation both happen on the
  runtime's side, and its evaluation counter is observable, which the
  tests use to prove laziness.

* `SubprocessTransport` never links the runtime. It keeps the dependency
  graph on this side and, when a value is finally needed, assembles a
  complete program text plus an input manifest with binary value files,
  then shells out to the `weldmill` command-line tool. Useful where the
  runtime is only available as an executable.

Both speak the same tiny vocabulary: data leaves (a type text and wire
bytes), computed nodes (an expression fragment over numbered
dependencies ``v0..vk``), and evaluation to a ``(type text, bytes)``
pair. Fragments must refer to dependencies by those positional names;
any lambda parameters inside a fragment must not look like ``v<digits>``
or ``t<digits>`` or the assembler could capture them.
"""

from __future__ import annotations

import json
import os
import re
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from typing import Protocol

from .errors import ClientError, EvaluationFailed


class Transport(Protocol):
    def new_data(self, type_text: str, data: bytes) -> int:
        """Create a leaf holding an already-encoded value."""

    def new_computed(self, deps: list[int], fragment: str) -> int:
        """Create a node computing `fragment` over dependencies v0..vk."""

    def object_type(self, handle: int) -> str:
        """Type of the value a node would produce; raises on ill-typed graphs."""

    def evaluate(self, handle: int, threads: int = 1) -> tuple[str, bytes]:
        """Force a node; returns its type text and wire bytes."""

    def free(self, handle: int) -> None:
        """Release a node. Other nodes built on it stay usable."""

    def eval_count(self) -> int | None:
        """Evaluations the runtime has performed, or None if unobservable."""


class ForeignTransport:
    """In-process transport over the runtime's handle-based surface."""

    def __init__(self):
        from weldmill import foreign

        self._foreign = foreign

    def new_data(self, type_text: str, data: bytes) -> int:
        return self._call(self._foreign.weld_new_data, type_text, data)

    def new_computed(self, deps: list[int], fragment: str) -> int:
        return self._call(self._foreign.weld_new_computed, deps, fragment)

    def object_type(self, handle: int) -> str:
        return self._call(self._foreign.weld_object_type, handle)

    def evaluate(self, handle: int, threads: int = 1) -> tuple[str, bytes]:
        result = self._call(self._foreign.weld_evaluate, handle, threads)
        try:
            error = self._foreign.weld_result_error(result)
            if error is not None:
                stage, _, message = error.partition(": ")
                raise EvaluationFailed(stage, message)
            return (
                self._foreign.weld_result_type(result),
                self._foreign.weld_result_bytes(result),
            )
        finally:
            self._foreign.weld_free_result(result)

    def free(self, handle: int) -> None:
        self._call(self._foreign.weld_free_object, handle)

    def eval_count(self) -> int | None:
        return self._foreign.weld_eval_count()

    @staticmethod
    def _call(fn, *args):
        # The runtime raises its own exception types; fold them into ours
        # so callers only ever catch ClientError.
        try:
            return fn(*args)
        except ClientError:
            raise
        except Exception as err:
            raise ClientError(str(err)) from err


@dataclass
class _Leaf:
    type_text: str
    data: bytes


@dataclass
class _Computed:
    fragment: str
    deps: tuple[int, ...]


_DEP_NAME_RE = re.compile(r"\bv(\d+)\b")


class SubprocessTransport:
    """Out-of-process transport that drives the `weldmill` command."""

    def __init__(self, command: list[str] | None = None):
        self._command = command or [sys.executable, "-m", "weldmill.cli"]
        self._nodes: dict[int, _Leaf | _Computed] = {}
        self._next = 1

    def _add(self, node: _Leaf | _Computed) -> int:
        handle = self._next
        self._next += 1
        self._nodes[handle] = node
        return handle

    def _node(self, handle: int) -> _Leaf | _Computed:
        try:
            return self._nodes[handle]
        except KeyError:
            raise ClientError(f"unknown or freed handle {handle}") from None

    def new_data(self, type_text: str, data: bytes) -> int:
        return self._add(_Leaf(type_text, data))

    def new_computed(self, deps: list[int], fragment: str) -> int:
        for h in deps:
            self._node(h)
        return self._add(_Computed(fragment, tuple(deps)))

    def free(self, handle: int) -> None:
        self._node(handle)
        del self._nodes[handle]

    def eval_count(self) -> int | None:
        return None

    def _assemble(self, root: int) -> tuple[str, list[tuple[str, str, bytes]]]:
        """Linearize the graph under `root` into a program and its inputs.

        Leaves become manifest entries named v0, v1, ... in first-visit
        order; shared computed nodes become t0, t1, ... let bindings; the
        root's own expression ends the program.
        """
        names: dict[int, str] = {}
        inputs: list[tuple[str, str, bytes]] = []
        lets: list[tuple[str, str]] = []

        def visit(handle: int) -> str:
            if handle in names:
                return names[handle]
            node = self._node(handle)
            if isinstance(node, _Leaf):
                name = f"v{len(inputs)}"
                names[handle] = name
                inputs.append((name, node.type_text, node.data))
                return name
            dep_names = [visit(d) for d in node.deps]

            def rename(m: re.Match) -> str:
                idx = int(m.group(1))
                if idx >= len(dep_names):
                    raise ClientError(
                        f"fragment refers to v{idx} but has only "
                        f"{len(dep_names)} dependencies: {node.fragment!r}"
                    )
                return dep_names[idx]

            body = _DEP_NAME_RE.sub(rename, node.fragment)
            if handle == root:
                return body
            name = f"t{len(lets)}"
            names[handle] = name
            lets.append((name, body))
            return name

        final = visit(root)
        program = "".join(f"{name} := {body}; " for name, body in lets) + final
        return program, inputs

    def _run_tool(self, args: list[str], workdir: str) -> str:
        proc = subprocess.run(
            self._command + args,
            capture_output=True,
            text=True,
            cwd=workdir,
        )
        if proc.returncode == 0:
            return proc.stdout
        if proc.returncode == 1:
            try:
                diag = json.loads(proc.stderr)
            except ValueError:
                raise ClientError(f"runtime failed: {proc.stderr.strip()}") from None
            raise EvaluationFailed(diag.get("stage", "unknown"), diag.get("message", ""))
        raise ClientError(f"weldmill usage error: {proc.stderr.strip()}")

    def _materialize(self, root: int, workdir: str) -> str:
        program, inputs = self._assemble(root)
        manifest = []
        for name, type_text, data in inputs:
            with open(os.path.join(workdir, f"{name}.bin"), "wb") as f:
                f.write(data)
            manifest.append({"name": name, "type": type_text, "path": f"{name}.bin"})
        with open(os.path.join(workdir, "program.ir"), "w", encoding="utf-8") as f:
            f.write(program + "\n")
        with open(os.path.join(workdir, "inputs.json"), "w", encoding="utf-8") as f:
            json.dump(manifest, f)
        return program

    def object_type(self, handle: int) -> str:
        with tempfile.TemporaryDirectory() as workdir:
            self._materialize(handle, workdir)
            out = self._run_tool(["check", "program.ir", "--inputs", "inputs.json"], workdir)
        return out.strip()

    def evaluate(self, handle: int, threads: int = 1) -> tuple[str, bytes]:
        with tempfile.TemporaryDirectory() as workdir:
            self._materialize(handle, workdir)
            type_text = self._run_tool(
                ["check", "program.ir", "--inputs", "inputs.json"], workdir
            ).strip()
            self._run_tool(
                [
                    "run",
                    "program.ir",
                    "--inputs",
                    "inputs.json",
                    "--threads",
                    str(threads),
                    "--out",
                    "result.bin",
                ],
                workdir,
            )
            with open(os.path.join(workdir, "result.bin"), "rb") as f:
                data = f.read()
        return type_text, data


_default: Transport | None = None


def default_transport() -> Transport:
    """The process-wide transport lazy containers use unless told otherwise."""
    global _default
    if _default is None:
        _default = ForeignTransport()
    return _default


def set_default_transport(transport: Transport | None) -> None:
    """Override the process-wide transport (None restores the built-in)."""
    global _default
    _default = transport
