"""Brute-force reference computations for cross-checking the closed forms.

Only :func:`xamm.curves.price` is used from the math module. Integrals come
from adaptive Simpson quadrature and inversions from plain bisection over
those integrals, so a transcription error in a primitive or in the
closed-form inversion shows up as a disagreement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .curves import Curve, price
from .errors import DomainError, NoConvergence

MAX_DEPTH = 60
_EPS = 2.220446049250313e-16


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error_estimate: float
    evaluations: int


def quad_value(curve: Curve, a: float, b: float, tol: float = 1e-12) -> QuadratureResult:
    """Integrate ``price(curve, .)`` over ``[a, b]`` to relative tolerance ``tol``.

    Adaptive Simpson: each panel is compared with its two halves and split
    until the difference is within its share of the tolerance. Accepted
    panels get the Richardson correction ``(S2 - S1) / 15``.
    """
    if not (a > 0 and b > 0):
        raise DomainError(f"bounds must be > 0, got [{a!r}, {b!r}]")
    if not tol > 0:
        raise DomainError(f"tol must be > 0, got {tol!r}")
    if a == b:
        return QuadratureResult(0.0, 0.0, 0)
    sign = 1.0
    if a > b:
        a, b, sign = b, a, -1.0

    def f(x):
        return price(curve, x)

    # coarse 16-panel Simpson pass fixes the absolute target
    n = 16
    h = (b - a) / n
    xs = [a + k * h for k in range(n)] + [b]
    ys = [f(x) for x in xs]
    evals = n + 1
    coarse = h / 3 * (ys[0] + ys[-1] + 4 * sum(ys[1:-1:2]) + 2 * sum(ys[2:-1:2]))
    abs_tol = tol * abs(coarse)

    pieces: list[float] = []
    err = 0.0
    stack = []
    for k in range(0, n, 2):
        lo, mid, hi = xs[k], xs[k + 1], xs[k + 2]
        s = (hi - lo) / 6 * (ys[k] + 4 * ys[k + 1] + ys[k + 2])
        stack.append((lo, hi, ys[k], ys[k + 1], ys[k + 2], s, abs_tol * 2 / n, 0))
    while stack:
        lo, hi, flo, fmid, fhi, whole, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        evals += 2
        left = (mid - lo) / 6 * (flo + 4 * flm + fmid)
        right = (hi - mid) / 6 * (fmid + 4 * frm + fhi)
        delta = left + right - whole
        if abs(delta) <= 15 * eps:
            pieces.append(left + right + delta / 15)
            err += abs(delta) / 15
            continue
        if depth >= MAX_DEPTH:
            raise NoConvergence(
                f"quadrature exceeded depth {MAX_DEPTH} near [{lo!r}, {hi!r}]")
        stack.append((lo, mid, flo, flm, fmid, left, eps / 2, depth + 1))
        stack.append((mid, hi, fmid, frm, fhi, right, eps / 2, depth + 1))
    value = math.fsum(pieces)
    # floor the estimate at accumulated rounding in the panel sums
    err += 8 * _EPS * math.fsum(abs(p) for p in pieces)
    return QuadratureResult(sign * value, err, evals)


def brute_invert(curve: Curve, j: float, v: float, tol: float = 1e-12,
                 max_iter: int = 200) -> float:
    """Withdrawal ``d`` with ``quad(j - d, j) == v`` by bisection on ``d``.

    The integral is accumulated piecewise: moving the lower bracket adds the
    integral over the strip just crossed, so each step integrates a short
    interval only. When the bracket shrinks to adjacent floats before
    ``tol`` is met, the end whose integral is closer to ``v`` is returned.
    """
    if not j > 0:
        raise DomainError(f"balance must be > 0, got {j!r}")
    if not v >= 0:
        raise DomainError(f"value must be >= 0, got {v!r}")
    if v == 0:
        return 0.0
    lo, hi, f_lo = 0.0, j, 0.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            f_hi = f_lo + quad_value(curve, j - hi, j - lo, 1e-13).value
            return lo if abs(f_lo - v) <= abs(f_hi - v) else hi
        f_mid = f_lo + quad_value(curve, j - mid, j - lo, 1e-13).value
        if abs(f_mid - v) <= tol:
            return mid
        if f_mid < v:
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    raise NoConvergence(f"brute_invert missed tol={tol!r} (bracket [{lo!r}, {hi!r}])")


def constant_product_out(i: float, j: float, di: float) -> float:
    """Output of an ``x * y = k`` pool for input ``di``."""
    return j * di / (i + di)
