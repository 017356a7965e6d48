"""Exception hierarchy shared by every subpackage."""


class DdpcError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(DdpcError, ValueError):
    """Array shapes or signal dimensions are inconsistent."""


class SignalTooShort(DdpcError, ValueError):
    """A signal has fewer samples than the requested Hankel depth."""


class DegenerateData(DdpcError, ValueError):
    """The regressor carries no usable information (all singular values cut)."""


class NotPositiveDefinite(DdpcError, ValueError):
    """A matrix required to be SPD failed its Cholesky factorization."""


class OutOfDomain(DdpcError, ValueError):
    """A phase value lies outside [0, 1]."""


class NegativeDuration(DdpcError, ValueError):
    """A duration is non-positive or time runs backwards."""


class StepTooLong(DdpcError, ValueError):
    """A touchdown target exceeds the kinematic step limit."""


class BufferNotWarm(DdpcError, RuntimeError):
    """A plan was requested before the feedback buffer holds T_ini samples."""


class NonMonotonicTime(DdpcError, ValueError):
    """A feedback sample arrived with a timestamp earlier than the last one."""


class SolverNotOptimal(DdpcError, RuntimeError):
    """The QP solver did not reach optimality.

    The partial result is attached as ``result`` and must not be applied.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class PlantDiverged(DdpcError, RuntimeError):
    """The simulated walker fell during a run."""


class MissingRuns(DdpcError, FileNotFoundError):
    """A report was requested for a directory holding no run outputs."""


class ConfigError(DdpcError, ValueError):
    """A scenario file is malformed or references missing resources."""
