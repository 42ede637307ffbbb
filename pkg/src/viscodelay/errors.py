"""Exception hierarchy.

Validation problems derive from :class:`ValidationError` so front ends can
map the whole family onto one exit status.
"""


class ViscodelayError(Exception):
    pass


class ValidationError(ViscodelayError, ValueError):
    pass


# kernel
class MassNotLessThanOne(ValidationError):
    pass


class NonPositiveMu0(ValidationError):
    pass


class DecayViolated(ValidationError):
    pass


class TailTooLarge(ValidationError):
    pass


class NegativeArgument(ValidationError):
    pass


# schedule
class OffIntervalShorterThanDelay(ValidationError):
    pass


class NonPositiveLength(ValidationError):
    pass


class NonPositiveBound(ValidationError):
    pass


class BeyondSchedule(ViscodelayError):
    pass


# scenario / dynamics
class InconsistentModeCount(ValidationError):
    pass


class SimulationError(ViscodelayError):
    pass


class BufferUnderfilled(SimulationError):
    pass


class NonFiniteState(SimulationError):
    pass


class Diverged(SimulationError):
    """Raised when the energy guard trips; ``trajectory`` holds the partial run."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class KernelNotExponential(SimulationError):
    pass


# certificates
class CertificateError(ViscodelayError):
    pass


class NotDecaying(CertificateError):
    pass


class ZeroInitialEnergy(CertificateError):
    pass


class IntervalTooShort(CertificateError):
    pass


class ShortDelayInapplicable(CertificateError):
    pass


class NotPeriodicLengths(CertificateError):
    pass


class NoContraction(CertificateError):
    pass
