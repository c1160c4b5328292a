"""Exception hierarchy.

Errors split into two families that the CLI maps to distinct exit codes:
``ExqrError`` subclasses signal domain or regime failures (bad levels,
degenerate spacings, truncation trouble), ``ConfigError`` signals malformed
input files or options.
"""

from __future__ import annotations


class ExqrError(Exception):
    """Base class for domain and regime failures."""


class DomainError(ExqrError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class DesignError(ExqrError, ValueError):
    """The design matrix violates the dataset invariants."""


class DegenerateBasisError(ExqrError):
    """A basis submatrix is singular."""


class UnboundedError(ExqrError):
    """The piecewise-linear objective has no finite minimizer."""


class UnboundedFrontierError(UnboundedError):
    pass


class TruncationError(ExqrError):
    """The truncated Poisson objective could not be certified after doubling."""


class InfeasibleConstraintsError(ExqrError):
    pass


class CrossingViolationError(DomainError):
    """x'c <= 0 where a type 2/3 heterogeneity profile needs x'c > 0."""


class SpacingDegenerateError(ExqrError):
    """A quantile spacing is nonpositive or zero (small-sample crossing).

    Attributes
    ----------
    spacings : dict
        The spacing values involved, keyed by a short label.
    """

    def __init__(self, message: str, spacings: dict | None = None):
        super().__init__(message)
        self.spacings = dict(spacings or {})


class MomentError(ExqrError):
    pass


class UnsupportedModelError(ExqrError):
    pass


class GeneratorError(ExqrError):
    pass


class ConfigError(Exception):
    """Malformed configuration or input file."""
