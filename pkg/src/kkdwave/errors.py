"""Exception hierarchy shared by all kkdwave modules."""


class KKDError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(KKDError, ValueError):
    """An argument or configuration value violates its documented range."""


class ShapeError(KKDError, ValueError):
    """Two sample streams that must be aligned have different shapes or rates."""


class SingularConfigurationError(KKDError):
    """The round-trip gain of the line equals one, so no steady state exists."""


class DegenerateDataError(KKDError):
    """Data cannot support the requested estimate (zero power, rank-deficient covariance)."""


class StateError(KKDError):
    """An operation was called on a probe that is not in the required state."""


class CalibrationError(KKDError):
    """LMS calibration exhausted its iteration budget without meeting the stopping rule.

    The partially adapted probe state is attached as ``state`` so callers can
    inspect the residual reflection coefficient.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state

    @property
    def measured_gamma(self):
        return None if self.state is None else self.state.measured_gamma
