"""Exception hierarchy shared by every nilmkit module.

The CLI maps :class:`DataError` subclasses to exit code 2 and
:class:`DivergedTraining` to exit code 3.
"""


class NilmError(Exception):
    """Base class for all nilmkit errors."""


# -- tensor engine -----------------------------------------------------------

class ShapeMismatch(NilmError, ValueError):
    pass


class NonFiniteInput(NilmError, ValueError):
    pass


class InvalidStride(NilmError, ValueError):
    pass


class UnknownKind(NilmError, ValueError):
    pass


class DomainError(NilmError, ValueError):
    pass


class NotScalar(NilmError, ValueError):
    pass


class DetachedTape(NilmError, RuntimeError):
    pass


class MissingGradient(NilmError, RuntimeError):
    pass


class EmptySequence(NilmError, ValueError):
    pass


# -- data --------------------------------------------------------------------

class DataError(NilmError):
    """Problems with input data; exit code 2 at the CLI."""


class MalformedHeader(DataError, ValueError):
    pass


class NonMonotoneTime(DataError, ValueError):
    pass


class NonIntegerRatio(DataError, ValueError):
    pass


class DegenerateChannel(DataError, ValueError):
    pass


class WindowTooLong(DataError, ValueError):
    pass


class UnknownChannel(DataError, KeyError):
    pass


class GapInCoverage(DataError, ValueError):
    pass


class MissingChannel(DataError, KeyError):
    pass


class FrameTooShort(DataError, ValueError):
    pass


class MissingGroundTruth(DataError, KeyError):
    pass


class LengthMismatch(DataError, ValueError):
    pass


class ZeroTruthEnergy(DataError, ValueError):
    pass


class ZeroTotalEnergy(DataError, ValueError):
    pass


class UnsortedLevels(DataError, ValueError):
    pass


class EmptyInput(DataError, ValueError):
    pass


class EmptySample(DataError, ValueError):
    pass


# -- models ------------------------------------------------------------------

class WindowTooShort(NilmError, ValueError):
    pass


class ChannelMismatch(NilmError, ValueError):
    pass


class IncompatibleWindow(NilmError, ValueError):
    pass


class DivergedTraining(NilmError, RuntimeError):
    """Loss became NaN or infinite during optimization."""


class SingularSystem(NilmError, ValueError):
    pass


class IllConditioned(NilmError, ValueError):
    pass


class ObjectiveFailed(NilmError, RuntimeError):
    """Wraps an exception raised by a tuning objective, with the config attached."""

    def __init__(self, config, cause):
        super().__init__(f"objective failed at {config}: {cause!r}")
        self.config = config
        self.cause = cause
