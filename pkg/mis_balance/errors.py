"""
errors.py
Exception hierarchy shared by every mis_balance module.

Each exception carries the process exit code the bench CLI reports for it.
"""


class MisError(Exception):
    exit_code = 1


# --- Validation (exit 2) ---

class ValidationError(MisError, ValueError):
    exit_code = 2


class InvalidInterval(ValidationError):
    pass


class InvalidSimplex(ValidationError):
    pass


class BudgetTooSmall(ValidationError):
    pass


class UnknownExample(ValidationError):
    pass


class UnknownStrategy(ValidationError):
    pass


class NotNormalized(ValidationError):
    pass


class NonPositiveValue(ValidationError):
    pass


class BiasedTechnique(ValidationError):
    pass


class AllZeroVariance(ValidationError):
    pass


class CoverageError(ValidationError):
    pass


class ZeroMixtureAtSample(ValidationError):
    pass


# --- Numerical failures (exit 3) ---

class NumericalError(MisError):
    exit_code = 3


class NonConvergence(NumericalError):
    pass


class NonFiniteIntegrand(NumericalError):
    pass


class DidNotConverge(NumericalError):
    """Raised by the alpha solvers; `result` holds the best iterate found."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


# --- Internal self-checks (exit 4) ---

class SelfCheckViolation(MisError):
    exit_code = 4
