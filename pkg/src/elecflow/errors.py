"""Exception hierarchy and the global tolerance."""

from __future__ import annotations

TOL = 1e-9
"""Single global tolerance used by every predicate that does not take one."""


class ElecflowError(Exception):
    """Base class for library errors."""


class DimensionError(ElecflowError, ValueError):
    """Array lengths do not match the graph."""


class InfeasibleFlowError(ElecflowError, ValueError):
    """A flow violates conservation or capacity constraints."""


class MissingCapacityError(ElecflowError, ValueError):
    """An operation needed capacities that the graph does not carry."""


class NotMaximumError(ElecflowError, ValueError):
    """A flow claimed to be maximum still has an augmenting path."""


class DemandError(ElecflowError, ValueError):
    """A demand vector cannot be routed (nonzero sum on a component)."""


class ResistanceError(ElecflowError, ValueError):
    """Nonpositive or non-finite resistance."""


class ParseError(ElecflowError, ValueError):
    """Malformed instance file."""


class InvariantFault(ElecflowError, RuntimeError):
    """A runtime-checked invariant failed.

    ``step`` records the iteration index at which the check failed so the run
    report can point at it.
    """

    def __init__(self, name: str, message: str, step: int | None = None):
        self.name = name
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"[{name}]{where}: {message}")


class EmbeddingError(ElecflowError, ValueError):
    """Slacks are not induced by any vertex embedding of the lengths."""
