"""Cross-chain AMM math and a deterministic multi-chain swap simulator."""
from .curves import (Curve, antiderivative, initial_shares, invert_out, price,
                     proportional_shares, reference_shift, value_between,
                     value_of_change)
from .errors import (AmmError, DomainError, InsufficientLiquidity, InvariantViolation,
                     NoConvergence, SlippageExceeded, ValidationError)

__all__ = [
    "Curve", "price", "antiderivative", "value_between", "value_of_change", "invert_out",
    "initial_shares", "reference_shift", "proportional_shares", "AmmError", "DomainError",
    "InsufficientLiquidity", "InvariantViolation", "NoConvergence", "SlippageExceeded",
    "ValidationError",
]
