"""Exception hierarchy.

Two branches matter to callers: :class:`PreconditionError` marks inputs or
geometry for which an operation does not apply (the CLI maps these to exit
code 2), everything else deriving from :class:`ArtBHError` is a numerical
failure inside an otherwise valid run.
"""


class ArtBHError(Exception):
    """Base class for all package errors."""


class PreconditionError(ArtBHError):
    """Input violates the documented preconditions of an operation."""


# metric evaluation
class DegenerateMetric(PreconditionError):
    pass


class OutOfDomain(PreconditionError):
    def __init__(self, msg, x=None):
        super().__init__(msg)
        self.x = x


class SuperluminalFlow(PreconditionError):
    pass


# zero-set extraction
class NoZeroSet(PreconditionError):
    pass


class AmbiguousTopology(ArtBHError):
    pass


class NotFound(PreconditionError):
    pass


# ray integration
class DomainExit(ArtBHError):
    def __init__(self, s, x):
        super().__init__(f"path left the metric domain at s={s:.6g}, x={list(map(float, x))}")
        self.s = s
        self.x = x


class StepUnderflow(ArtBHError):
    pass


class DriftExceeded(ArtBHError):
    pass


class NotInsideErgosphere(PreconditionError):
    pass


# horizon finding
class ErgosphereCharacteristic(PreconditionError):
    pass


class OutsideErgosphere(PreconditionError):
    pass


class BranchFlip(ArtBHError):
    pass


class NoSignChange(ArtBHError):
    """No fixed point of the return map on the section (reported, not an internal fault)."""


class NotCharacteristic(PreconditionError):
    pass


class IndefiniteSign(PreconditionError):
    pass


# stability lab
class ConstructionFailed(ArtBHError):
    pass


# wave simulator
class CFLViolation(PreconditionError):
    pass


class NonPositiveG00(PreconditionError):
    pass


class NumericalBlowup(ArtBHError):
    pass


class ConfigError(PreconditionError):
    pass


class PreconditionFailed(PreconditionError):
    pass
