"""Exception types shared across the package."""


class ShootbenchError(Exception):
    """Base class for package-specific failures."""


class ConfigError(ShootbenchError):
    """Malformed or inconsistent configuration document."""


class NonFiniteState(ShootbenchError):
    """A vector field evaluation saw or produced non-finite data."""


class NonFiniteDerivativeChain(NonFiniteState):
    """A nested derivative evaluation produced non-finite values."""


class NewtonDivergence(ShootbenchError):
    """An implicit stage/step Newton solve exceeded its iteration cap."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DegenerateQuaternion(ShootbenchError):
    """Quaternion norm too small to renormalize (<= 1e-8)."""


class InsufficientHistory(ShootbenchError):
    """A multistep defect was asked for with the wrong history length."""


class UnsupportedCombination(ShootbenchError):
    """Requested (method, feature) pair is not defined."""


class EvaluationFailure(ShootbenchError):
    """Objective/constraint evaluation failed at a trial point."""


class ReferenceIntegrationFailure(ShootbenchError):
    """The high-accuracy reference integrator did not converge."""
