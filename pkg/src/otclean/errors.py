"""Exception and warning types raised across the package."""


class OTCleanError(ValueError):
    """Base class for every validation or runtime error raised by otclean."""


class DimensionMismatch(OTCleanError):
    pass


class LengthMismatch(DimensionMismatch):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class LabelOutOfRange(OTCleanError):
    pass


class NonFiniteFeature(OTCleanError):
    pass


class DuplicateId(OTCleanError):
    pass


class EmptyClass(OTCleanError):
    pass


class BetaOutOfRange(OTCleanError):
    pass


class NonPositiveExponent(OTCleanError):
    pass


class ZeroNormVector(OTCleanError):
    pass


class UndefinedPrototype(OTCleanError):
    pass


class InfeasibleMarginals(OTCleanError):
    pass


class NonFiniteCost(OTCleanError):
    pass


class InstanceTooLarge(OTCleanError):
    pass


class UndefinedRow(OTCleanError):
    pass


class AlphaOutOfRange(OTCleanError):
    pass


class EmptySubset(OTCleanError):
    pass


class DimensionTooSmall(OTCleanError):
    pass


class EtaOutOfRange(OTCleanError):
    pass


class AllEmpty(OTCleanError):
    pass


class MissingTruth(OTCleanError):
    pass


class EmptyGroup(OTCleanError):
    pass


class ConvergenceWarning(UserWarning):
    """Sinkhorn stopped at max_iterations above the requested tolerance."""
