"""Univariate price curves and the value integrals built on them.

Every function here is pure: it reads only its arguments, so the same
code runs unchanged on whichever chain hosts an asset.

Two curve kinds are supported:

* volatile: ``P(x) = w / x``
* stable:   ``P(x) = (w/x)(1 - t) + (w/s) t`` with the bell factor
  ``t = A^2 / ((x - s)^2 + A^2)`` centred on the equilibrium quantity ``s``
  (``x_stable``) and of width ``A`` (the amplification).

Value moved by a balance change ``a -> b`` is ``F(b) - F(a)`` where ``F`` is
the curve's primitive. A swap credits value on one chain and debits the same
value on another, so the sum of per-asset values stays at zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from .errors import DomainError, InsufficientLiquidity, NoConvergence

VOLATILE = "volatile"
STABLE = "stable"

#: Swaps may not leave a balance below this many units.
DUST = 1e-9
#: Default absolute tolerance (value units) for curve inversion.
VALUE_TOL = 1e-12
MAX_BISECTIONS = 128


@dataclass(frozen=True)
class Curve:
    kind: str
    weight: float
    x_stable: float | None = None
    amplification: float | None = None

    def __post_init__(self):
        if self.kind not in (VOLATILE, STABLE):
            raise DomainError(f"unknown curve kind {self.kind!r}")
        if not (self.weight > 0 and math.isfinite(self.weight)):
            raise DomainError(f"weight must be positive, got {self.weight!r}")
        if self.kind == STABLE:
            if self.x_stable is None or not self.x_stable > 0:
                raise DomainError(f"x_stable must be positive, got {self.x_stable!r}")
            if self.amplification is None or not self.amplification > 0:
                raise DomainError(
                    f"amplification must be positive, got {self.amplification!r}")
        elif self.x_stable is not None or self.amplification is not None:
            raise DomainError("volatile curves take no x_stable/amplification")

    @classmethod
    def volatile(cls, weight: float) -> Curve:
        return cls(VOLATILE, float(weight))

    @classmethod
    def stable(cls, weight: float, x_stable: float, amplification: float) -> Curve:
        return cls(STABLE, float(weight), float(x_stable), float(amplification))

    @property
    def is_stable(self) -> bool:
        return self.kind == STABLE


def _check_positive(name: str, x: float) -> None:
    if not x > 0:
        raise DomainError(f"{name} must be > 0, got {x!r}")


def price(curve: Curve, x: float) -> float:
    """Spot price of one unit of the asset at balance ``x``."""
    _check_positive("x", x)
    w = curve.weight
    if curve.kind == VOLATILE:
        return w / x
    s, a2 = curve.x_stable, curve.amplification ** 2
    d2 = (x - s) ** 2
    # (w/x)(1 - t) + (w/s) t, with 1 - t = d2 / (d2 + A^2)
    return w * (d2 / x + a2 / s) / (d2 + a2)


def antiderivative(curve: Curve, x: float) -> float:
    """Primitive ``F`` of :func:`price` with ``F' = price``.

    Volatile uses ``w ln x``. Stable uses the closed form

        w ln x - (wA/s) atan((s-x)/A)
          + wA (-2A ln x + 2s atan((s-x)/A) + A ln(A^2 + (s-x)^2)) / (2s^2 + 2A^2)

    evaluated term by term as written.
    """
    _check_positive("x", x)
    w = curve.weight
    if curve.kind == VOLATILE:
        return w * math.log(x)
    s, a = curve.x_stable, curve.amplification
    ln_x = math.log(x)
    arc = math.atan((s - x) / a)
    return (w * ln_x
            - w * a / s * arc
            + w * a * (-2 * a * ln_x + 2 * s * arc + a * math.log(a * a + (s - x) ** 2))
            / (2 * s * s + 2 * a * a))


def value_between(curve: Curve, x_from: float, x_to: float) -> float:
    """Value ``F(x_to) - F(x_from)``; positive when ``x_to > x_from``.

    The difference is taken analytically (log ratios via ``log1p``, the
    arctangent difference via ``atan2``) so short intervals keep full
    relative precision instead of cancelling two large primitives.
    """
    _check_positive("x_from", x_from)
    _check_positive("x_to", x_to)
    if x_from == x_to:
        return 0.0
    if x_to < x_from:
        return -value_between(curve, x_to, x_from)
    cb = curve.x_stable - x_to if curve.is_stable else 0.0
    return _value(curve, x_from, x_to, x_to - x_from, cb)


def value_of_change(curve: Curve, x: float, dx: float) -> float:
    """Value of moving the balance from ``x`` to ``x + dx`` (``dx`` may be negative).

    Takes the change itself rather than the far endpoint, so a small ``dx``
    on a large balance is not rounded away before the value is computed.
    """
    _check_positive("x", x)
    if not x + dx > 0:
        raise DomainError(f"balance {x!r} cannot change by {dx!r}")
    if dx == 0:
        return 0.0
    cb = math.fsum((curve.x_stable, -x, -dx)) if curve.is_stable else 0.0
    return _value(curve, x, x + dx, dx, cb)


def _log_ratio(num: float, den: float, diff: float) -> float:
    """``log(num/den)`` given ``diff = num - den`` computed without cancellation."""
    r = diff / den
    if -0.5 < r < 1.0:
        return math.log1p(r)
    return math.log(num / den)


def _value(curve: Curve, x: float, b: float, dx: float, cb: float) -> float:
    # b ~ x + dx and cb ~ s - b; the caller supplies whichever is more exact
    w = curve.weight
    ln_ratio = _log_ratio(b, x, dx)
    if curve.kind == VOLATILE:
        return w * ln_ratio
    # F(x) = w/(s^2+A^2) * [s^2 ln x - (A^3/s) atan((s-x)/A) + (A^2/2) ln(A^2+(s-x)^2)]
    s, amp = curve.x_stable, curve.amplification
    a2 = amp * amp
    c = s - x
    # atan(cb/A) - atan(c/A), exact for every quadrant
    d_atan = math.atan2(-amp * dx, a2 + c * cb)
    d_bell = _log_ratio(a2 + cb * cb, a2 + c * c, -dx * (c + cb))
    inner = s * s * ln_ratio - (a2 * amp / s) * d_atan + 0.5 * a2 * d_bell
    return w * inner / (s * s + a2)


def bisect_increasing(f: Callable[[float], float], target: float, lo: float,
                      hi: float, tol: float,
                      max_iter: int = MAX_BISECTIONS) -> tuple[float, int]:
    """Solve ``f(x) = target`` for increasing ``f`` on ``[lo, hi]``.

    Returns ``(x, iterations)`` with ``|f(x) - target| <= tol``.
    """
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            # bracket ends are adjacent floats: nothing representable is closer
            err = NoConvergence(
                f"tol={tol!r} finer than float resolution at [{lo!r}, {hi!r}]")
            err.resolution = abs(f(hi) - f(lo))
            raise err
        fm = f(mid)
        if abs(fm - target) <= tol:
            return mid, it
        if fm < target:
            lo = mid
        else:
            hi = mid
    raise NoConvergence(
        f"bisection missed tol={tol!r} after {max_iter} iterations (bracket [{lo!r}, {hi!r}])")


def invert_out(curve: Curve, balance_j: float, v: float, tol: float = VALUE_TOL,
               *, dust: float = DUST, max_iter: int = MAX_BISECTIONS) -> float:
    """Amount ``d`` to withdraw so that ``value_between(j - d, j) == v``."""
    return solve_out(curve, balance_j, v, tol, dust=dust, max_iter=max_iter)[0]


def solve_out(curve: Curve, balance_j: float, v: float, tol: float = VALUE_TOL,
              *, dust: float = DUST,
              max_iter: int = MAX_BISECTIONS) -> tuple[float, int]:
    """Like :func:`invert_out` but also reports the bisection count (0 for closed form)."""
    _check_positive("balance_j", balance_j)
    _check_positive("tol", tol)
    if not v >= 0:
        raise DomainError(f"value must be >= 0, got {v!r}")
    if v == 0:
        return 0.0, 0
    if curve.kind == VOLATILE:
        out = -balance_j * math.expm1(-v / curve.weight)
        if not balance_j - out >= dust:
            raise InsufficientLiquidity(
                f"value {v!r} would drain balance {balance_j!r} below dust")
        return out, 0
    hi = balance_j - dust
    if hi <= 0 or value_between(curve, dust, balance_j) < v - tol:
        raise InsufficientLiquidity(
            f"value {v!r} exceeds drainable value of balance {balance_j!r}")
    return bisect_increasing(lambda d: -value_of_change(curve, balance_j, -d),
                             v, 0.0, hi, tol, max_iter)


def swap_out(curve_in: Curve, balance_in: float, amount_in: float,
             curve_out: Curve, balance_out: float, tol: float = VALUE_TOL) -> float:
    """Single-computation swap: credit ``amount_in`` then invert on the out side."""
    v = value_of_change(curve_in, balance_in, amount_in)
    return invert_out(curve_out, balance_out, v, tol)


def initial_shares(balances: Sequence[float]) -> float:
    """Geometric mean of the founding deposits."""
    if not balances:
        raise DomainError("need at least one balance")
    for b in balances:
        _check_positive("balance", b)
    return math.exp(math.fsum(math.log(b) for b in balances) / len(balances))


def reference_shift(x_0: float, x_p: float, dx_p: float) -> float:
    """Reference move ``dx_0`` that keeps ``value_between(x_0, x_p)`` fixed."""
    _check_positive("x_0", x_0)
    _check_positive("x_p", x_p)
    if not x_p + dx_p > 0:
        raise DomainError(f"shifted balance {x_p + dx_p!r} is not positive")
    return x_0 / x_p * dx_p


def proportional_shares(dx_p: float, x_p: float, supply: float) -> float:
    """Shares minted (positive) or burned (negative) for a proportional deposit."""
    _check_positive("x_p", x_p)
    _check_positive("supply", supply)
    if not dx_p > -x_p:
        raise DomainError(f"withdrawal {dx_p!r} exceeds balance {x_p!r}")
    return dx_p / x_p * supply


def scale_curve(curve: Curve, factor: float) -> Curve:
    """Rescale a curve's quantity axis by ``factor``.

    Volatile curves are scale free. For stable curves the centre and width
    of the bell move together so that value between scaled bounds is
    unchanged.
    """
    _check_positive("factor", factor)
    if curve.kind == VOLATILE:
        return curve
    return replace(curve, x_stable=curve.x_stable * factor,
                   amplification=curve.amplification * factor)
