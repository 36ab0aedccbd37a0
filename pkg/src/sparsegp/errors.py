"""Exception and warning types raised by sparsegp."""


class InvalidInputError(ValueError):
    """Arguments violate a documented precondition."""


class IntegrityError(RuntimeError):
    """Conflicting entries were inserted into a sparse matrix."""


class NumericalBreakdownError(ArithmeticError):
    """An iterative routine produced NaN or lost positive definiteness."""


class ConstraintViolationError(RuntimeError):
    """A hyperparameter state violates the sparsity constraint."""


class ConvergenceWarning(UserWarning):
    """An iterative routine stopped before reaching its tolerance."""
