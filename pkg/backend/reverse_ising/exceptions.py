"""
Exceptions raised by the reverse Ising toolkit.

Invariant violations on domain types use django's ``ValidationError`` and bad
settings use ``ImproperlyConfigured``; everything below is a runtime failure.
"""


class ReverseIsingError(Exception):
    """Base class for runtime failures of the toolkit."""


class EnumerationLimitError(ReverseIsingError):
    """A brute-force enumeration was requested beyond its size guard."""


class SolverError(ReverseIsingError):
    """Every start of a minimization failed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class SamplingExhausted(ReverseIsingError):
    """The attempt cap was hit before the requested auxiliary-array mix was found."""

    def __init__(self, message, arrays, feasible, infeasible):
        super().__init__(message)
        self.arrays = arrays
        self.feasible = feasible
        self.infeasible = infeasible


class TrainingDiverged(ReverseIsingError):
    """MLP training produced a non-finite loss."""


class ModelFormatError(ReverseIsingError):
    """A saved surrogate model could not be read."""


class BenchmarkOrderingError(ReverseIsingError):
    """A timed method was not faster than the one it is meant to replace."""
