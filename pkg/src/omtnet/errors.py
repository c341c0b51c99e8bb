"""Exception types. The CLI maps them onto exit codes."""


class OmtError(Exception):
    exit_code = 1


class ConfigError(OmtError):
    exit_code = 2


class PhysicsRegimeError(OmtError):
    """Parameters outside the regime where the model applies."""
    exit_code = 3


class InstabilityError(PhysicsRegimeError):
    pass


class MultistableError(PhysicsRegimeError):
    pass


class AdiabaticityError(PhysicsRegimeError):
    pass


class UnreachableRateError(PhysicsRegimeError):
    pass


class NumericsError(OmtError):
    exit_code = 4


class SingularMatrixError(NumericsError):
    pass


class ConvergenceError(NumericsError):
    pass


class BracketError(NumericsError):
    pass


class CutoffError(NumericsError):
    pass


class StepSizeError(NumericsError):
    pass


class TruncationError(NumericsError):
    pass


class BoundaryViolationError(PhysicsRegimeError):
    """No pulse parameters meet the boundary conditions of the transfer."""


class ProximityError(AdiabaticityError):
    """Qubit tuned too close to a normal mode for the elimination to hold."""


class ZeroCouplingError(PhysicsRegimeError):
    """The exchange coupling vanishes, so no gate time exists."""
