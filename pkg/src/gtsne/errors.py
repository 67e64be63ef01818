"""Exception hierarchy.

Everything raised on purpose derives from :class:`GTSNEError`. The CLI maps
:class:`ConfigError` to a usage failure and every other subclass to a domain
failure.
"""


class GTSNEError(Exception):
    """Base class for library errors."""


class InputError(GTSNEError, ValueError):
    """Malformed numeric input (non-finite coordinates, bad shapes)."""


class ConfigError(GTSNEError, ValueError):
    """Unknown family, missing field or otherwise unusable configuration."""


class KernelDefinitionError(GTSNEError):
    """A kernel callable returned non-finite values where finite ones are required."""


class KernelInvalidError(GTSNEError):
    """A kernel fails a condition needed by the requested computation."""


class CalibrationError(GTSNEError):
    """Base for per-point bandwidth calibration failures.

    ``index`` is the offending point when known. The aggregate raised by
    :func:`gtsne.calibrate.calibrate_all` carries ``failures``, a list of
    ``(index, error)`` pairs.
    """

    def __init__(self, message, index=None, failures=None):
        super().__init__(message)
        self.index = index
        self.failures = list(failures or [])


class CalibrationUnderflowError(CalibrationError):
    pass


class InfeasiblePerplexityError(CalibrationError):
    pass


class DegenerateGeometryError(CalibrationError):
    pass


class NoConvergenceError(CalibrationError):
    pass


class DivergenceError(GTSNEError):
    """Non-finite values appeared (KL with an unsupported Q, NaN during descent)."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class EvaluationError(GTSNEError):
    """Continuum quantity not resolvable on the measure's quadrature grid."""


class ResolutionError(GTSNEError):
    """No sign change of the continuum entropy functional inside the expanded bracket."""


class PreconditionError(GTSNEError):
    """Caller-supplied data violates a documented precondition."""
