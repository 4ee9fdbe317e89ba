"""Exception and warning types raised across the package."""


class HypextError(Exception):
    """Base class for all errors raised by hypext."""


class DimensionMismatch(HypextError, ValueError):
    pass


class SystemDefinitionError(HypextError, ValueError):
    """A system definition violates a structural identity (e.g. |A| = |alpha| + |Gamma|)."""


class InvariantMismatch(HypextError):
    """Claimed Kronecker invariants disagree with rank data recomputed from the pencil."""


class RankDeficientTimeDirection(HypextError):
    pass


class Condition2Violation(HypextError):
    pass


class DegenerateDirection(HypextError, ValueError):
    pass


class SignatureError(HypextError, ValueError):
    pass


class BlockMismatch(HypextError, ValueError):
    pass


class SingularTimeSymbol(HypextError):
    pass


class ComplexRoots(HypextError):
    pass


class UnknownKind(HypextError, ValueError):
    pass


class SimulationBlowUp(HypextError):
    """Non-finite values appeared during time integration."""

    def __init__(self, message, step=None, history=None):
        super().__init__(message)
        self.step = step
        self.history = history or []


class NoCoherentPulse(HypextError):
    pass


class IllConditionedRankDecision(HypextError, UserWarning):
    """Issued (as a warning) when a rank decision sits within a factor 10 of the threshold."""


class UncertifiedExtension(HypextError):
    """Evolution requested for an extension that is not strongly hyperbolic."""
