"""Exception types raised across the simulator."""


class NpSwabError(Exception):
    """Base class for all simulator errors."""


class RejectedInputError(NpSwabError, ValueError):
    """Non-finite or malformed numeric input."""


class ConfigError(NpSwabError, ValueError):
    """Invalid, inconsistent or unknown configuration."""


class CalibrationDegenerateError(NpSwabError):
    """The calibration design matrix is rank deficient."""


class UnreachableWaypointError(NpSwabError):
    """Inverse kinematics failed to converge for a waypoint."""

    def __init__(self, index, residual):
        self.index = index
        self.residual = residual
        super().__init__(
            f"waypoint {index} unreachable (residual {residual:.3e})")


class DegenerateKnotError(NpSwabError, ValueError):
    """Consecutive spline knots coincide."""


class ControllerFault(NpSwabError):
    """Controller received non-finite input; the trial must abort."""


class UndefinedTestError(NpSwabError):
    """A statistical test is undefined for the given data (zero marginal)."""


class DegenerateTestError(NpSwabError):
    """A statistical test is degenerate (zero variance)."""
