"""Exception hierarchy shared by the math, pool and protocol layers."""


class AmmError(Exception):
    """Base class for every error raised by this package."""


class DomainError(AmmError, ValueError):
    """An argument is outside the domain of a formula (e.g. x <= 0)."""


class NoConvergence(AmmError, ArithmeticError):
    """An iterative solver exhausted its budget before reaching tolerance.

    ``resolution`` is set when the bracket collapsed to adjacent floats: the
    gap in function value between them, i.e. the best attainable accuracy.
    """

    resolution: float | None = None


class InsufficientLiquidity(AmmError):
    """A withdrawal would push a balance below the dust floor."""


class SlippageExceeded(AmmError):
    """The computed output is below the caller's minimum."""

    def __init__(self, amount_out: float, min_out: float):
        super().__init__(f"output {amount_out!r} below min_out {min_out!r}")
        self.amount_out = amount_out
        self.min_out = min_out


class UnknownAsset(AmmError, KeyError):
    def __str__(self) -> str:
        return f"unknown asset {self.args[0]!r}"


class UnknownSwap(AmmError, KeyError):
    def __str__(self) -> str:
        return f"unknown swap id {self.args[0]!r}"


class InsufficientShares(AmmError):
    pass


class ValidationError(AmmError):
    """A scenario or message failed structural validation.

    ``where`` is a field path such as ``events[3].asset_in`` or a
    ``line N, column M`` location for parse errors.
    """

    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


class InvariantViolation(AmmError):
    def __init__(self, message: str, state: dict | None = None):
        super().__init__(message)
        self.state = state
