"""Decimal-string number encoding for files and the simulated wire.

Floats are written with ``repr``, the shortest decimal string that parses
back to the identical binary64 value, so a value survives any number of
encode/decode round trips bit for bit.
"""
from __future__ import annotations

import math
import re

from .errors import ValidationError

_DECIMAL = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?")


def fmt_num(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot encode non-finite number {x!r}")
    return repr(x)


def parse_num(s, where: str = "") -> float:
    """Parse a decimal string. Bare JSON numbers are refused on purpose."""
    if not isinstance(s, str):
        raise ValidationError(f"expected a decimal string, got {type(s).__name__} {s!r}",
                              where)
    if not _DECIMAL.fullmatch(s.strip()):
        raise ValidationError(f"not a decimal number: {s!r}", where)
    return float(s)
