"""Counters collected while a program runs.

The engine is an interpreter, so wall-clock time tells you very little.
Instead it counts the structural events that a performance model would care
about: how many times input vectors were walked, how many intermediate
vectors were materialized, how often append buffers had to grow, and how the
work was carved into tasks. Tests assert on these counters directly.

Byte accounting models engine-owned buffers (builder segments, materialized
vectors and dictionaries). Host Python object lifetimes are managed by the
garbage collector as usual; the counters track the logical footprint, with
intermediates released when evaluation finishes.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field


@dataclass
class EvalStats:
    """Everything one call to evaluate() observed about its own execution.

    vector_traversals counts one per iterated vector per loop execution that
    reads at least one element (a zip over two vectors counts two; sort
    counts one; a loop running zero iterations counts nothing).
    vector_allocations is
    the total number of vectors and dictionaries materialized, and
    intermediate_allocations is the same total minus those that survive into
    the final result. node_evals is only populated when the engine was
    configured with count_evals=True; it maps the canonical text of each
    expression node to the number of times that node was executed.
    """

    vector_traversals: int = 0
    vector_allocations: int = 0
    intermediate_allocations: int = 0
    vecbuilder_reallocations: int = 0
    peak_bytes: int = 0
    live_bytes: int = 0
    tasks_created: int = 0
    tasks_stolen: int = 0
    node_evals: dict[str, int] = field(default_factory=dict)

    def render(self) -> str:
        lines = [
            f"vector traversals:        {self.vector_traversals}",
            f"intermediate allocations: {self.intermediate_allocations}",
            f"vecbuilder reallocations: {self.vecbuilder_reallocations}",
            f"peak bytes:               {self.peak_bytes}",
            f"live bytes:               {self.live_bytes}",
            f"tasks created:            {self.tasks_created}",
            f"tasks stolen:             {self.tasks_stolen}",
        ]
        return "\n".join(lines)


_counter_lock = threading.Lock()
_evaluations = 0


def note_evaluation() -> None:
    """Record that one engine evaluation started. Called by evaluate()."""
    global _evaluations
    with _counter_lock:
        _evaluations += 1


def evaluation_count() -> int:
    """Total evaluate() calls in this process.

    The lazy object API builds arbitrarily large graphs without running
    anything; callers watch this counter to prove it.
    """
    with _counter_lock:
        return _evaluations
