"""Exception and warning types.

The CLI maps :class:`InputError` subclasses to exit code 1 and
:class:`InconsistencyError` / :class:`CapacityError` to exit code 2.
"""


class CausalMergeError(Exception):
    """Base class for all package errors."""


class InputError(CausalMergeError, ValueError):
    """Malformed or out-of-range input."""


class QueryError(InputError):
    """Query kind or arity does not fit the operation."""


class ConfigError(InputError):
    """Invalid configuration value."""


class DegenerateDataError(InputError):
    """Data that cannot support the requested statistic (zero variance, singular design)."""


class InsufficientDataError(InputError):
    """Too few rows for the requested test."""


class DegenerateSignError(DegenerateDataError):
    """Sample correlation too close to zero to report a sign."""


class EmptyQuerySetError(InputError):
    """Mean over an empty query list."""


class ModelOutsideClassError(CausalMergeError):
    """The model cannot answer the query (e.g. direction between unconnected nodes)."""


class CapacityError(CausalMergeError):
    """Enumeration size above the supported cap."""

    def __init__(self, what, n, cap):
        self.n = n
        self.cap = cap
        super().__init__(f"{what}: n={n} exceeds the enumeration cap n<={cap}")


class InconsistencyError(CausalMergeError):
    """Inputs contradict each other (e.g. marginals that do not agree)."""


class DivergenceError(CausalMergeError):
    """A numeric search failed to terminate within its bracket."""


class VacuousConditionWarning(UserWarning):
    """Every conditioning state has zero probability."""


class ZeroMassWarning(UserWarning):
    """A conditional was defined on a zero-probability state and filled with a uniform row."""
