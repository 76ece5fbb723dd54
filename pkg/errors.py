"""
Exceptions raised by the causal discovery library.

All of them derive from ``CausalDiscoveryError``, which is a ``ValueError``,
so code that already catches ``ValueError`` keeps working.
"""


class CausalDiscoveryError(ValueError):
    """Base class for every error raised by this package."""


class SingularSystemError(CausalDiscoveryError):
    """(I - W) is not invertible; W has a near-unit spectral radius."""

    def __init__(self, rcond):
        self.rcond = rcond
        super().__init__(
            f"non-invertible system: (I - W) has reciprocal condition {rcond:.3e}"
        )


class DimensionMismatchError(CausalDiscoveryError):
    """Array or graph shapes disagree."""


class CyclicGraphError(CausalDiscoveryError):
    """A DAG-only operation received a graph with a directed cycle."""


class DataFormatError(CausalDiscoveryError):
    """A data or constraint file could not be parsed."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ConstraintSpecError(CausalDiscoveryError):
    """A constraint is malformed, duplicated or names an unknown variable."""


class InsufficientConstraintsError(CausalDiscoveryError):
    """Fewer eligible cause/target pairs exist than constraints requested."""

    def __init__(self, requested, available):
        self.requested = requested
        self.available = available
        super().__init__(
            f"requested {requested} constraints but only {available} pairs are "
            f"eligible (shortfall {requested - available})"
        )
