"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid argument or inconsistent dimensions."""


class ConfigurationError(ValueError):
    """Agent roster or experiment configuration cannot be honoured."""


class NumericalError(ArithmeticError):
    """Factorization breakdown that jitter could not repair."""


class BudgetError(RuntimeError):
    """Exact enumeration would exceed the allowed support size."""
