"""Exception hierarchy. The CLI maps each family to an exit code."""


class CanonStatError(Exception):
    exit_code = 1


class InputError(CanonStatError, ValueError):
    """Bad arguments, contract violations, unparsable config."""

    exit_code = 2


class SizeError(InputError):
    """Request exceeds an enumeration or evaluation budget."""


class UnsupportedVariantError(InputError):
    pass


class ConsistencyError(InputError):
    """Inputs that must describe the same experiment do not."""


class NumericError(CanonStatError, ArithmeticError):
    exit_code = 3


class ConvergenceError(NumericError):
    pass


class CovarianceError(NumericError):
    """Increment covariance indefinite beyond tolerance."""

    def __init__(self, message, lambda_min=None):
        super().__init__(message)
        self.lambda_min = lambda_min


class VerificationFailure(CanonStatError):
    exit_code = 4
