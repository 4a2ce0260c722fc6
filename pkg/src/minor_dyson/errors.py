"""Error vocabulary shared across the package.

Input-condition violations derive from :class:`InvalidInputError` (a
``ValueError``), numerical breakdowns from :class:`NumericalFailureError`
(an ``ArithmeticError``).  The command line maps the former to exit code 2
and the latter to exit code 3.
"""


class MinorDysonError(Exception):
    """Base class for all package errors."""


class InvalidInputError(MinorDysonError, ValueError):
    """An argument violates a documented precondition."""


class InterlacingError(InvalidInputError):
    """A spectra pair is not (strictly) interlaced where it must be."""


class DegenerateSpectrumError(InvalidInputError):
    """A spectrum has a repeated eigenvalue where distinctness is required."""


class InfeasibleGaugeError(InvalidInputError):
    """No real nonnegative border radii exist for the requested gauge."""


class NumericalFailureError(MinorDysonError, ArithmeticError):
    """A numerical routine failed to reach its accuracy contract."""


class EigenvaluePairingError(NumericalFailureError):
    """Kramers pair collapse failed for a quaternion (beta = 4) spectrum."""


class StepFailureError(NumericalFailureError):
    """An SDE step kept violating interlacing at the minimum step size.

    Carries a snapshot of the offending state for diagnosis.
    """

    def __init__(self, message, state=None, t=None, dt=None):
        super().__init__(message)
        self.state = state
        self.t = t
        self.dt = dt
