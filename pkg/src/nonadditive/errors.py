"""Exception types shared across the package."""


class DomainError(ValueError):
    """A point lies outside the phase space of a system."""


class ArgumentError(ValueError):
    """An argument violates an operation's precondition."""


class BudgetError(RuntimeError):
    """An enumeration would exceed its word budget."""

    def __init__(self, needed, limit):
        super().__init__(f"enumeration needs {needed} words, budget limit is {limit}")
        self.needed = needed
        self.limit = limit


class InsufficientProbesError(RuntimeError):
    def __init__(self, attempted, found):
        super().__init__(f"only {found} probes landed inside the ball after {attempted} attempts")
        self.attempted = attempted
        self.found = found


class FitError(ValueError):
    """Not enough usable points for a rate fit."""


class CapabilityError(TypeError):
    """A measure or system lacks the capability an estimator needs."""


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
