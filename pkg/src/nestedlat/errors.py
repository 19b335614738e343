"""Exception types shared across the package."""


class NestedLatticeError(Exception):
    """Base class for all package errors."""


class BudgetExceeded(NestedLatticeError):
    """An exhaustive enumeration would visit more items than allowed.

    ``required`` carries the exact count that was refused so callers can
    fail fast or raise their budget.
    """

    def __init__(self, required, budget, what="codewords"):
        self.required = int(required)
        self.budget = int(budget)
        super().__init__(f"{what}: {self.required} exceeds budget {self.budget}")


class InvalidShape(NestedLatticeError, ValueError):
    pass


class LengthMismatch(NestedLatticeError, ValueError):
    pass


class InvalidRowCount(NestedLatticeError, ValueError):
    pass


class DimensionTooSmall(NestedLatticeError, ValueError):
    pass


class RankDeficient(NestedLatticeError, ValueError):
    pass


class ConfigInvalid(NestedLatticeError, ValueError):
    pass


class UnknownCheck(ConfigInvalid):
    def __init__(self, token):
        self.token = token
        super().__init__(f"unknown check: {token!r}")


class InvalidK1(InvalidShape):
    """Subcode row count outside ``(0, k]``."""
