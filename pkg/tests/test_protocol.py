import random

import pytest

from xamm.curves import Curve, swap_out, value_between
from xamm.errors import DomainError, UnknownSwap, ValidationError
from xamm.oracle import quad_value
from xamm.pool import init_pool, value_deviation
from xamm.protocol import (FINALIZED, PENDING, REFUNDED, REFUNDING, Registry, SwapMessage,
                           SwapReceipt, ack_message, apply_ack, apply_refund,
                           finalize_swap, initiate_swap, timeout_swap)

V1 = Curve.volatile(1)


@pytest.fixture
def world():
    pools, _ = init_pool([("eth", "A", 100.0, V1), ("sol", "B", 100.0, V1)])
    return pools, Registry("eth"), Registry("sol")


def relay(msg):
    return SwapMessage.from_wire(msg.to_wire())


class TestInitiate:
    def test_message_value(self, world):
        pools, reg, _ = world
        msg = initiate_swap(pools["eth"], reg, "A", 100.0, "sol", "B")
        q = quad_value(V1, 100, 200, 1e-13).value
        assert msg.value == pytest.approx(q, rel=1e-12)
        assert msg.status == PENDING

    def test_rejects_zero(self, world):
        pools, reg, _ = world
        with pytest.raises(DomainError):
            initiate_swap(pools["eth"], reg, "A", 0.0, "sol", "B")
        assert pools["eth"].assets["A"].balance == 100

    def test_distinct_ids(self, world):
        pools, reg, _ = world
        a = initiate_swap(pools["eth"], reg, "A", 1.0, "sol", "B")
        b = initiate_swap(pools["eth"], reg, "A", 1.0, "sol", "B")
        assert a.swap_id != b.swap_id


class TestFinalize:
    def test_receipt(self, world):
        pools, reg_e, reg_s = world
        msg = initiate_swap(pools["eth"], reg_e, "A", 100.0, "sol", "B", min_out=40)
        r = finalize_swap(pools["sol"], relay(msg), reg_s)
        assert isinstance(r, SwapReceipt)
        assert r.amount_out == pytest.approx(50, rel=1e-14)
        assert r.effective_price == pytest.approx(2, rel=1e-14)

    def test_idempotent(self, world):
        pools, reg_e, reg_s = world
        msg = relay(initiate_swap(pools["eth"], reg_e, "A", 100.0, "sol", "B"))
        first = finalize_swap(pools["sol"], msg, reg_s)
        bal = pools["sol"].assets["B"].balance
        assert finalize_swap(pools["sol"], msg, reg_s) == first
        assert pools["sol"].assets["B"].balance == bal

    def test_slippage_refund(self, world):
        pools, reg_e, reg_s = world
        msg = initiate_swap(pools["eth"], reg_e, "A", 100.0, "sol", "B", min_out=60)
        out = finalize_swap(pools["sol"], relay(msg), reg_s)
        assert isinstance(out, SwapMessage) and out.status == REFUNDING
        assert out.swap_id == msg.swap_id
        assert pools["sol"].assets["B"].balance == 100

    @pytest.mark.parametrize("change", [{"asset_out": "ZZZ"}, {"dest_chain": "moon"}])
    def test_malformed_refunds(self, world, change):
        from dataclasses import replace
        pools, reg_e, reg_s = world
        msg = replace(initiate_swap(pools["eth"], reg_e, "A", 1.0, "sol", "B"), **change)
        assert finalize_swap(pools["sol"], msg, reg_s).status == REFUNDING

    def test_expired(self, world):
        pools, reg_e, reg_s = world
        msg = initiate_swap(pools["eth"], reg_e, "A", 1.0, "sol", "B", expires_at=10)
        assert finalize_swap(pools["sol"], msg, reg_s, now=10).status == REFUNDING
        assert pools["sol"].assets["B"].balance == 100

    def test_verify_mode(self, world):
        pools, reg_e, reg_s = world
        msg = initiate_swap(pools["eth"], reg_e, "A", 100.0, "sol", "B")
        r = finalize_swap(pools["sol"], msg, reg_s, 1e-9, claimed_out=50.0)
        assert r.amount_out == 50.0

    def test_verify_mode_rejects_wrong_claim(self, world):
        pools, reg_e, reg_s = world
        msg = initiate_swap(pools["eth"], reg_e, "A", 100.0, "sol", "B")
        r = finalize_swap(pools["sol"], msg, reg_s, 1e-9, claimed_out=55.0)
        assert r.status == REFUNDING


class TestRefund:
    def test_immediate_refund_returns_input(self, world):
        pools, reg_e, reg_s = world
        msg = initiate_swap(pools["eth"], reg_e, "A", 37.0, "sol", "B", min_out=1e9)
        refund = relay(finalize_swap(pools["sol"], relay(msg), reg_s))
        got = apply_refund(pools["eth"], refund, reg_e)
        assert got == pytest.approx(37.0, rel=1e-9)
        assert pools["eth"].assets["A"].balance == pytest.approx(100, rel=1e-12)
        assert reg_e.outgoing[msg.swap_id].status == REFUNDED

    def test_redelivery(self, world):
        pools, reg_e, reg_s = world
        msg = initiate_swap(pools["eth"], reg_e, "A", 37.0, "sol", "B", min_out=1e9)
        refund = finalize_swap(pools["sol"], msg, reg_s)
        first = apply_refund(pools["eth"], refund, reg_e)
        bal = pools["eth"].assets["A"].balance
        assert apply_refund(pools["eth"], refund, reg_e) == first
        assert pools["eth"].assets["A"].balance == bal

    def test_refund_after_price_move_is_value_based(self, world):
        pools, reg_e, reg_s = world
        msg = initiate_swap(pools["eth"], reg_e, "A", 20.0, "sol", "B", min_out=1e9)
        # an unrelated swap into A moves its price before the refund lands
        other = initiate_swap(pools["eth"], reg_e, "A", 50.0, "sol", "B")
        finalize_swap(pools["sol"], other, reg_s)
        refund = finalize_swap(pools["sol"], msg, reg_s)
        bal = pools["eth"].assets["A"].balance
        got = apply_refund(pools["eth"], refund, reg_e)
        assert got != pytest.approx(20.0, rel=1e-3)
        assert value_between(V1, bal - got, bal) == pytest.approx(msg.value, abs=1e-12)
        assert abs(value_deviation(pools)) < 1e-12

    def test_unknown_swap(self, world):
        pools, reg_e, reg_s = world
        msg = initiate_swap(pools["eth"], Registry("other"), "A", 1.0, "sol", "B", min_out=9)
        refund = finalize_swap(pools["sol"], msg, reg_s)
        with pytest.raises(UnknownSwap):
            apply_refund(pools["eth"], refund, reg_e)

    def test_timeout(self, world):
        pools, reg_e, _ = world
        msg = initiate_swap(pools["eth"], reg_e, "A", 10.0, "sol", "B")
        assert timeout_swap(pools["eth"], reg_e, msg.swap_id) == pytest.approx(10, rel=1e-12)
        assert timeout_swap(pools["eth"], reg_e, msg.swap_id) is None

    def test_ack(self, world):
        pools, reg_e, reg_s = world
        msg = initiate_swap(pools["eth"], reg_e, "A", 10.0, "sol", "B")
        r = finalize_swap(pools["sol"], msg, reg_s)
        apply_ack(reg_e, relay(ack_message(msg, r)))
        assert reg_e.outgoing[msg.swap_id].status == FINALIZED
        assert timeout_swap(pools["eth"], reg_e, msg.swap_id) is None


class TestWire:
    def test_round_trip_exact(self):
        rng = random.Random(0)
        for _ in range(500):
            v = rng.uniform(0, 10) * 10 ** rng.randint(-10, 10)
            msg = SwapMessage("x-1", "a", "b", "A", "B", v, rng.random(), amount_in=v / 3)
            assert relay(msg) == msg

    def test_numbers_are_strings(self):
        msg = SwapMessage("x-1", "a", "b", "A", "B", 0.1, 0.0)
        assert '"value":"0.1"' in msg.to_wire()

    @pytest.mark.parametrize("text", [
        "not json", "{}", '{"swap_id": 1}',
    ])
    def test_malformed(self, text):
        with pytest.raises(ValidationError):
            SwapMessage.from_wire(text)

    def test_float_field_rejected(self):
        wire = SwapMessage("x-1", "a", "b", "A", "B", 0.1, 0.0).to_wire()
        with pytest.raises(ValidationError):
            SwapMessage.from_wire(wire.replace('"value":"0.1"', '"value":0.1'))


def test_end_to_end_equals_direct_evaluation():
    rng = random.Random(42)
    for _ in range(200):
        wi, wj = rng.uniform(0.1, 5), rng.uniform(0.1, 5)
        i, j, di = rng.uniform(1, 1e4), rng.uniform(1, 1e4), rng.uniform(1e-3, 1e3)
        pools, _ = init_pool([("eth", "A", i, Curve.volatile(wi)),
                              ("sol", "B", j, Curve.volatile(wj))])
        reg_e, reg_s = Registry("eth"), Registry("sol")
        msg = initiate_swap(pools["eth"], reg_e, "A", di, "sol", "B")
        r = finalize_swap(pools["sol"], relay(msg), reg_s)
        direct = swap_out(Curve.volatile(wi), i, di, Curve.volatile(wj), j)
        assert r.amount_out == direct
        closed = j * (1 - (i / (i + di)) ** (wi / wj))
        assert r.amount_out == pytest.approx(closed, rel=1e-9)


def test_duplicate_schedule_matches_clean_schedule():
    def play(dup):
        pools, _ = init_pool([("eth", "A", 100.0, V1),
                              ("sol", "B", 400.0, Curve.stable(1, 400, 50))])
        regs = {"eth": Registry("eth"), "sol": Registry("sol")}
        rng = random.Random(4)
        for k in range(50):
            src, dst = (("eth", "A"), ("sol", "B")) if k % 2 else (("sol", "B"), ("eth", "A"))
            bal = pools[src[0]].assets[src[1]].balance
            min_out = 1e9 if k % 7 == 0 else 0.0
            msg = initiate_swap(pools[src[0]], regs[src[0]], src[1], bal * rng.uniform(0.01, 0.2),
                                dst[0], dst[1], min_out)
            for _ in range(1 + dup):
                out = finalize_swap(pools[dst[0]], relay(msg), regs[dst[0]])
            if isinstance(out, SwapMessage):
                for _ in range(1 + dup):
                    apply_refund(pools[src[0]], relay(out), regs[src[0]])
        return pools

    clean, noisy = play(0), play(2)
    assert clean == noisy
