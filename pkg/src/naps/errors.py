"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 2,
numeric failures with 3. Everything raised by the library derives from
:class:`NapsError` so callers can catch broadly.
"""


class NapsError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(NapsError):
    """Invalid configuration: bad parameters, unsupported combinations,
    malformed files, missing inputs."""


class DomainError(NapsError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class BinningError(ConfigError):
    """A nuisance bin required by a fit or lookup is empty or missing."""


class NumericError(NapsError):
    """A numeric procedure failed: non-convergent quadrature, degenerate
    intervals, unattainable inversion targets."""


class SaturationError(NumericError):
    """A generalized inverse was requested above the fitted maximum.

    Carries the attainable maximum so callers can decide how to degrade.
    """

    def __init__(self, message: str, attainable_max: float):
        super().__init__(message)
        self.attainable_max = attainable_max
