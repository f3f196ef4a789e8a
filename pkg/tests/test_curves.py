import math
import random

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from xamm.curves import (DUST, Curve, antiderivative, bisect_increasing, initial_shares,
                         invert_out, price, proportional_shares, reference_shift,
                         scale_curve, solve_out, swap_out, value_between,
                         value_of_change)
from xamm.errors import DomainError, InsufficientLiquidity, NoConvergence
from xamm.oracle import brute_invert, constant_product_out, quad_value

STABLE = Curve.stable(1.0, 100.0, 20.0)

# frozen from xamm.oracle.quad_value / brute_invert at tol 1e-13
QUAD_STABLE_50_200 = 1.377255565611547
QUAD_STABLE_100_130 = 0.2824997251733679
BRUTE_STABLE_OUT = 23.707193169070706  # j=100, v=0.25

positive = st.floats(min_value=1e-3, max_value=1e6)
weights = st.floats(min_value=0.05, max_value=20)


@st.composite
def curves_(draw):
    w = draw(weights)
    if draw(st.booleans()):
        return Curve.volatile(w)
    s = draw(st.floats(min_value=1.0, max_value=1e5))
    a = s * draw(st.floats(min_value=0.01, max_value=5.0))
    return Curve.stable(w, s, a)


class TestCurveType:
    def test_rejects_bad_params(self):
        with pytest.raises(DomainError):
            Curve.volatile(0)
        with pytest.raises(DomainError):
            Curve.stable(1, -1, 1)
        with pytest.raises(DomainError):
            Curve.stable(1, 1, 0)
        with pytest.raises(DomainError):
            Curve("linear", 1)

    def test_scale_curve(self):
        assert scale_curve(Curve.volatile(2), 3) == Curve.volatile(2)
        assert scale_curve(STABLE, 3) == Curve.stable(1, 300, 60)


class TestPrice:
    def test_volatile(self):
        assert price(Curve.volatile(2), 100) == 0.02

    def test_stable_at_centre(self):
        for a in (0.1, 5, 1e4):
            assert price(Curve.stable(1, 100, a), 100) == pytest.approx(0.01, rel=1e-15)

    def test_stable_degenerates_to_volatile(self):
        assert price(Curve.stable(1, 100, 1e-9), 50) == pytest.approx(1 / 50, rel=1e-12)

    @pytest.mark.parametrize("x", [0, -1])
    def test_domain(self, x):
        with pytest.raises(DomainError):
            price(STABLE, x)

    def test_asymptotes(self):
        w = 1.0
        assert price(Curve.volatile(w), 1e-12) > 1e9 * w
        assert price(Curve.volatile(w), 1e12) < 1e-9 * w
        assert price(STABLE, 1e-12) > 1e9
        assert price(STABLE, 1e12) < 1e-9

    @given(curves_(), positive, positive)
    def test_monotone(self, c, x1, x2):
        lo, hi = sorted((x1, x2))
        assert price(c, lo) >= price(c, hi)


class TestAntiderivative:
    def test_volatile_log(self):
        c = Curve.volatile(1)
        assert antiderivative(c, math.e) - antiderivative(c, 1) == pytest.approx(1, abs=1e-15)

    def test_volatile_matches_quadrature(self):
        c = Curve.volatile(3)
        got = antiderivative(c, 200) - antiderivative(c, 100)
        assert got == pytest.approx(2.079441541679836, rel=1e-12)

    @pytest.mark.parametrize("x", [1.0, 37.5, 99.0, 100.0, 101.0, 250.0, 9000.0])
    def test_stable_finite_difference(self, x):
        h = 1e-5 * x
        fd = (antiderivative(STABLE, x + h) - antiderivative(STABLE, x - h)) / (2 * h)
        assert fd == pytest.approx(price(STABLE, x), rel=1e-6)

    def test_stable_matches_quadrature(self):
        got = antiderivative(STABLE, 200) - antiderivative(STABLE, 50)
        assert got == pytest.approx(QUAD_STABLE_50_200, rel=1e-10)


class TestValueBetween:
    def test_volatile_doubling(self):
        assert value_between(Curve.volatile(1), 100, 200) == pytest.approx(math.log(2), rel=1e-15)

    def test_zero_width(self):
        assert value_between(STABLE, 42.0, 42.0) == 0.0
        assert value_between(Curve.volatile(5), 3.0, 3.0) == 0.0

    def test_additivity_example(self):
        c = Curve.volatile(1)
        total = value_between(c, 50, 400)
        assert value_between(c, 50, 100) + value_between(c, 100, 400) == pytest.approx(
            total, rel=1e-15)

    def test_stable_frozen(self):
        assert value_between(STABLE, 100, 130) == pytest.approx(QUAD_STABLE_100_130, rel=1e-12)

    def test_sign(self):
        assert value_between(STABLE, 130, 100) == -value_between(STABLE, 100, 130)

    @given(curves_(), positive, positive)
    def test_agrees_with_primitive(self, c, a, b):
        assume(abs(math.log(b / a)) > 0.01)
        diff = antiderivative(c, b) - antiderivative(c, a)
        assert value_between(c, a, b) == pytest.approx(diff, rel=1e-9, abs=1e-12)

    @given(curves_(), positive, positive, positive)
    def test_additive(self, c, a, b, d):
        a, b, d = sorted((a, b, d))
        total = value_between(c, a, d)
        parts = value_between(c, a, b) + value_between(c, b, d)
        assert parts == pytest.approx(total, rel=1e-9, abs=1e-300)

    @settings(max_examples=60, deadline=None)
    @given(curves_(), st.floats(min_value=0.5, max_value=2e4),
           st.floats(min_value=0.5, max_value=2e4))
    def test_matches_quadrature(self, c, a, b):
        q = quad_value(c, a, b, 1e-12).value
        assert value_between(c, a, b) == pytest.approx(q, rel=1e-10, abs=1e-14)


class TestValueOfChange:
    def test_small_deposit_on_large_balance(self):
        # i + di rounds away the low bits of di; the change itself must not
        v = value_of_change(Curve.volatile(1), 32768.0, 0.001)
        assert v == math.log1p(0.001 / 32768.0)
        out = swap_out(Curve.volatile(1), 32768.0, 0.001, Curve.volatile(1), 9542.0)
        assert out == pytest.approx(constant_product_out(32768.0, 9542.0, 0.001), rel=1e-14)

    def test_deep_drain_stable(self):
        c = Curve.stable(1.0, 1.0, 2.0)
        # frozen from 50-digit evaluation of the primitive
        assert value_of_change(c, 262.0, -260.39045168691945) == pytest.approx(
            -6.9077552789808405, rel=1e-15)

    @given(curves_(), positive, st.floats(min_value=-0.999, max_value=1e3))
    def test_matches_value_between(self, c, x, rel):
        dx = rel * x
        assume(dx != 0)
        b = x + dx
        if b - x == dx:  # endpoint exactly representable: both forms see the same interval
            assert value_of_change(c, x, dx) == pytest.approx(
                value_between(c, x, b), rel=1e-13, abs=1e-300)

    def test_domain(self):
        with pytest.raises(DomainError):
            value_of_change(STABLE, 10.0, -10.0)


class TestInvertOut:
    def test_volatile_half(self):
        assert invert_out(Curve.volatile(1), 100, math.log(2)) == pytest.approx(50, rel=1e-14)

    def test_volatile_deep(self):
        c = Curve.volatile(1)
        out = invert_out(c, 100, math.log(100))
        assert out == pytest.approx(99, rel=1e-13)
        assert out == pytest.approx(brute_invert(c, 100, math.log(100), 1e-13), rel=1e-12)

    def test_zero(self):
        assert invert_out(STABLE, 100, 0.0) == 0.0
        assert invert_out(Curve.volatile(1), 100, 0.0) == 0.0

    def test_stable_frozen(self):
        out, iters = solve_out(STABLE, 100, 0.25, 1e-12)
        assert out == pytest.approx(BRUTE_STABLE_OUT, rel=1e-10)
        assert 0 < iters <= 128

    def test_drain_is_refused(self):
        with pytest.raises(InsufficientLiquidity):
            invert_out(Curve.volatile(1), 100, 40.0)
        with pytest.raises(InsufficientLiquidity):
            invert_out(STABLE, 100, 40.0)

    def test_dust_floor_respected(self):
        c = Curve.volatile(1)
        v = math.log(100 / 2e-9)
        assert 100 - invert_out(c, 100, v) >= DUST

    def test_negative_value(self):
        with pytest.raises(DomainError):
            invert_out(STABLE, 100, -1.0)

    def test_iteration_budget(self):
        with pytest.raises(NoConvergence):
            invert_out(STABLE, 100, 0.25, 1e-12, max_iter=5)

    @given(curves_(), st.floats(min_value=1e-2, max_value=1e5), st.floats(0, 1))
    def test_round_trip(self, c, j, frac):
        v = frac * c.weight * math.log(1000)
        try:
            out = invert_out(c, j, v, 1e-12)
        except InsufficientLiquidity:
            # stable curves are flatter than w/x near the centre; only the
            # far tail can run out
            assert value_between(c, DUST, j) < v
            return
        except NoConvergence as e:
            # adjacent representable outputs straddle v by more than tol
            assert e.resolution > 1e-12
            return
        assert 0 <= out < j
        # one ulp of j in the output moves the value by price * ulp
        floor = 2 * price(c, j - out) * math.ulp(j) if out else 0.0
        assert abs(value_between(c, j - out, j) - v) <= max(1e-12, floor)

    @given(weights, positive, positive, st.floats(min_value=1e-6, max_value=1e6))
    def test_equal_weights_reduce_to_constant_product(self, w, i, j, di):
        c = Curve.volatile(w)
        try:
            out = swap_out(c, i, di, c, j)
        except InsufficientLiquidity:
            return
        assert out == pytest.approx(constant_product_out(i, j, di), rel=1e-9)


def test_bisect_reports_iterations():
    x, n = bisect_increasing(lambda t: t, 0.3, 0.0, 1.0, 1e-12)
    assert abs(x - 0.3) <= 1e-12 and n <= 45


class TestShares:
    def test_initial(self):
        assert initial_shares([100, 400]) == pytest.approx(200, rel=1e-15)
        assert initial_shares([8, 8, 8]) == pytest.approx(8, rel=1e-15)
        assert initial_shares([100]) == pytest.approx(100, rel=1e-15)

    @pytest.mark.parametrize("bad", [[], [1, 0], [-2, 3]])
    def test_initial_domain(self, bad):
        with pytest.raises(DomainError):
            initial_shares(bad)

    def test_reference_shift(self):
        assert reference_shift(50, 100, 10) == 5
        assert reference_shift(50, 100, 0) == 0
        assert 100 + reference_shift(100, 100, 200) == 300
        with pytest.raises(DomainError):
            reference_shift(50, 100, -100)

    def test_proportional(self):
        assert proportional_shares(200, 100, 100) == 200
        assert proportional_shares(0, 100, 100) == 0
        assert proportional_shares(-50, 100, 200) == -100
        with pytest.raises(DomainError):
            proportional_shares(-100, 100, 200)

    def test_reference_shift_1000_triples(self):
        rng = random.Random(8)
        for k in range(1000):
            w = rng.uniform(0.1, 10)
            if k % 2:
                s = 10 ** rng.uniform(0, 5)
                c = Curve.stable(w, s, s * 10 ** rng.uniform(-2, 1))
            else:
                c = Curve.volatile(w)
            x0, xp = (10 ** rng.uniform(-1, 6) for _ in range(2))
            dxp = xp * rng.uniform(-0.99, 10)
            before = value_between(c, x0, xp)
            after = value_between(scale_curve(c, 1 + dxp / xp),
                                  x0 + reference_shift(x0, xp, dxp), xp + dxp)
            assert after == pytest.approx(before, rel=1e-9, abs=1e-12)

    @given(curves_(), positive, positive, st.floats(min_value=-0.99, max_value=50))
    def test_reference_shift_preserves_value(self, c, x0, xp, rel):
        dxp = rel * xp
        dx0 = reference_shift(x0, xp, dxp)
        shifted = scale_curve(c, 1 + dxp / xp)
        before = value_between(c, x0, xp)
        after = value_between(shifted, x0 + dx0, xp + dxp)
        assert after == pytest.approx(before, rel=1e-9, abs=1e-12)
