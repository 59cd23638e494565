"""Exception types raised by the accounting routines."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class SigmaFloorError(ValueError):
    """Noise scale below the floor where the closed forms overflow."""


class IntegrabilityError(ArithmeticError):
    """A functional integral of a trade-off function is numerically infinite."""


class DegenerateError(ArithmeticError):
    """The CLT normalisation vanishes (no privacy loss accumulates)."""


class CalibrationError(ArithmeticError):
    """The root-finder could not bracket the requested target."""


class InfeasibleError(CalibrationError):
    """Calibration succeeded in mu but the implied noise scale is below the floor."""


class TailMassError(ArithmeticError):
    """Truncated probability of a privacy-loss distribution exceeds its budget."""


class QuadratureError(ArithmeticError):
    """Numerical integration failed to converge.

    Attributes:
        estimate: the value reached before giving up.
        abserr: the integrator's error estimate.
    """

    def __init__(self, message, estimate=float("nan"), abserr=float("nan")):
        super().__init__(message)
        self.estimate = estimate
        self.abserr = abserr
