"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` for malformed
inputs (shapes, configs, violated preconditions) and :class:`NumericalError`
for failures that only show up once the numbers are crunched. The CLI maps
them to exit codes 1 and 2 respectively.
"""


class DDLQGError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(DDLQGError, ValueError):
    """Inputs are malformed or violate a stated precondition."""


class ShapeError(ValidationError):
    """A matrix has the wrong shape.

    Attributes:
        field: name of the offending argument.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class NumericalError(DDLQGError, ArithmeticError):
    """A computation failed on numerical grounds."""


class AssumptionViolation(NumericalError):
    """Controllability/observability rank test failed."""


class DivergenceError(NumericalError):
    """A fixed-point iteration did not converge."""


class InsufficientDataError(NumericalError):
    """A data matrix that must have full row rank does not.

    Attributes:
        sigma_min: smallest singular value found (0.0 when structurally deficient).
        required_N: minimum number of columns for full row rank to be possible.
        t: time index of the first failing slice, when relevant.
    """

    def __init__(self, message, sigma_min=None, required_N=None, t=None):
        self.sigma_min = sigma_min
        self.required_N = required_N
        self.t = t
        super().__init__(message)


class IllPosedCostError(NumericalError):
    """The quadratic cost matrix is not positive definite."""


class DegenerateError(NumericalError):
    """A trajectory or realization matrix is rank deficient.

    Attributes:
        sigma_min: smallest singular value of the offending matrix.
    """

    def __init__(self, message, sigma_min=None):
        self.sigma_min = sigma_min
        super().__init__(message)


class InstabilityError(NumericalError):
    """A closed loop blew up.

    Attributes:
        step: time index at which the state norm exceeded the limit.
    """

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message)
