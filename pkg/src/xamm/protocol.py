"""Cross-chain swap lifecycle.

A swap is two local computations joined by one message:

1. :func:`initiate_swap` on the source chain credits the input and emits a
   ``Pending`` :class:`SwapMessage` whose ``value`` is the only number the
   destination needs.
2. :func:`finalize_swap` on the destination inverts that value against its
   own balance. On failure it answers with a ``Refunding`` message.
3. :func:`apply_refund` (or :func:`timeout_swap` when nothing comes back)
   withdraws the same value from the source asset.

Every handler is keyed by ``swap_id`` and idempotent, so duplicated or
reordered deliveries cannot apply a swap twice.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

from . import curves
from .codec import fmt_num, parse_num
from .curves import VALUE_TOL
from .errors import (AmmError, DomainError, InsufficientLiquidity, NoConvergence,
                     SlippageExceeded, UnknownAsset, UnknownSwap, ValidationError)
from .pool import PoolView, swap_credit, swap_debit

PENDING = "Pending"
FINALIZED = "Finalized"
REFUNDING = "Refunding"
REFUNDED = "Refunded"
STATUSES = (PENDING, FINALIZED, REFUNDING, REFUNDED)

_NUM_FIELDS = ("value", "min_out", "amount_in", "fee_paid")
_OPT_NUM_FIELDS = ("amount_out",)


@dataclass(frozen=True)
class SwapMessage:
    """The relayed payload.

    ``value`` is the only field the destination math reads. ``amount_in``
    and ``fee_paid`` ride along for receipts; ``expires_at`` is the last
    tick (exclusive) at which the destination may still execute.
    """
    swap_id: str
    source_chain: str
    dest_chain: str
    asset_in: str
    asset_out: str
    value: float
    min_out: float
    status: str = PENDING
    amount_in: float = 0.0
    fee_paid: float = 0.0
    expires_at: int | None = None
    amount_out: float | None = None
    reason: str = ""

    def to_wire(self) -> str:
        d = asdict(self)
        for k in _NUM_FIELDS:
            d[k] = fmt_num(d[k])
        for k in _OPT_NUM_FIELDS:
            if d[k] is not None:
                d[k] = fmt_num(d[k])
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_wire(cls, text: str) -> SwapMessage:
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ValidationError(str(e), "message") from None
        if not isinstance(d, dict) or set(d) != {f for f in cls.__dataclass_fields__}:
            raise ValidationError("unexpected field set", "message")
        for k in _NUM_FIELDS:
            d[k] = parse_num(d[k], f"message.{k}")
        for k in _OPT_NUM_FIELDS:
            if d[k] is not None:
                d[k] = parse_num(d[k], f"message.{k}")
        if d["status"] not in STATUSES:
            raise ValidationError(f"bad status {d['status']!r}", "message.status")
        return cls(**d)


@dataclass(frozen=True)
class SwapReceipt:
    swap_id: str
    amount_in: float
    amount_out: float
    fee_paid: float
    effective_price: float


@dataclass
class OutgoingSwap:
    message: SwapMessage
    status: str = PENDING
    amount_out: float | None = None
    refunded: float | None = None


@dataclass
class Registry:
    """Processed-swap bookkeeping for one chain.

    ``outgoing`` holds swaps this chain initiated; ``incoming`` the recorded
    outcome of every swap message this chain has processed.
    """
    chain_id: str
    next_nonce: int = 0
    outgoing: dict[str, OutgoingSwap] = field(default_factory=dict)
    incoming: dict[str, SwapReceipt | SwapMessage] = field(default_factory=dict)

    def new_swap_id(self) -> str:
        self.next_nonce += 1
        return f"{self.chain_id}-{self.next_nonce}"

    @property
    def processed(self) -> set[str]:
        return set(self.incoming) | {k for k, o in self.outgoing.items()
                                     if o.status in (FINALIZED, REFUNDED)}


def initiate_swap(pool: PoolView, registry: Registry, asset_in: str, amount: float,
                  dest_chain: str, asset_out: str, min_out: float = 0.0, *,
                  expires_at: int | None = None) -> SwapMessage:
    if not amount > 0:
        raise DomainError(f"swap amount must be > 0, got {amount!r}")
    if not min_out >= 0:
        raise DomainError(f"min_out must be >= 0, got {min_out!r}")
    fee = pool.fee_rate * amount
    value = swap_credit(pool, asset_in, amount)
    msg = SwapMessage(registry.new_swap_id(), pool.chain_id, dest_chain, asset_in,
                      asset_out, value, min_out, PENDING, amount, fee, expires_at)
    registry.outgoing[msg.swap_id] = OutgoingSwap(msg)
    return msg


def _refund_for(msg: SwapMessage, reason: str) -> SwapMessage:
    return replace(msg, status=REFUNDING, reason=reason)


def finalize_swap(pool: PoolView, msg: SwapMessage, registry: Registry,
                  tol: float = VALUE_TOL, *, now: int | None = None,
                  claimed_out: float | None = None) -> SwapReceipt | SwapMessage:
    """Execute a pending swap on the destination, or answer with a refund.

    A repeated ``swap_id`` returns the recorded outcome without touching
    state. A message delivered at or after ``expires_at`` is refunded.
    """
    if msg.swap_id in registry.incoming:
        return registry.incoming[msg.swap_id]
    if msg.status != PENDING:
        raise DomainError(f"finalize expects a Pending message, got {msg.status}")
    if msg.dest_chain != pool.chain_id:
        outcome = _refund_for(msg, f"wrong chain {msg.dest_chain!r}")
    elif msg.expires_at is not None and now is not None and now >= msg.expires_at:
        outcome = _refund_for(msg, "expired")
    else:
        try:
            out = swap_debit(pool, msg.asset_out, msg.value, msg.min_out, tol,
                             claimed_out=claimed_out)
        except (SlippageExceeded, InsufficientLiquidity, NoConvergence, UnknownAsset,
                DomainError) as e:
            outcome = _refund_for(msg, f"{type(e).__name__}: {e}")
        else:
            outcome = SwapReceipt(msg.swap_id, msg.amount_in, out, msg.fee_paid,
                                  msg.amount_in / out)
    registry.incoming[msg.swap_id] = outcome
    return outcome


def ack_message(msg: SwapMessage, receipt: SwapReceipt) -> SwapMessage:
    """Notification sent back to the source once a swap has executed."""
    return replace(msg, status=FINALIZED, amount_out=receipt.amount_out)


def apply_ack(registry: Registry, ack: SwapMessage) -> None:
    rec = _outgoing(registry, ack.swap_id)
    if rec.status == PENDING:
        rec.status = FINALIZED
        rec.amount_out = ack.amount_out
    elif rec.status == REFUNDED:
        raise AmmError(f"swap {ack.swap_id} finalized remotely after a local refund")


def _outgoing(registry: Registry, swap_id: str) -> OutgoingSwap:
    try:
        return registry.outgoing[swap_id]
    except KeyError:
        raise UnknownSwap(swap_id) from None


def _withdraw_value(pool: PoolView, rec: OutgoingSwap, tol: float) -> float:
    asset = pool.asset(rec.message.asset_in)
    try:
        amount = curves.invert_out(asset.curve, asset.balance, rec.message.value, tol)
    except NoConvergence as e:
        if e.resolution is None:
            raise
        # a refund must complete: accept the closest representable amount
        amount = curves.invert_out(asset.curve, asset.balance, rec.message.value,
                                   e.resolution)
    asset.balance -= amount
    rec.status = REFUNDED
    rec.refunded = amount
    return amount


def apply_refund(pool: PoolView, refund: SwapMessage, registry: Registry,
                 tol: float = VALUE_TOL) -> float:
    """Return the refunded value to the swapper as a token amount.

    The amount is whatever carries the message's value at the current
    balance, so the source asset's local value drops by exactly what the
    initiation added. Redelivery returns the first refund amount unchanged.
    """
    if refund.status != REFUNDING:
        raise DomainError(f"refund expects a Refunding message, got {refund.status}")
    rec = _outgoing(registry, refund.swap_id)
    if rec.status == REFUNDED:
        return rec.refunded
    if rec.status == FINALIZED:
        raise AmmError(f"swap {refund.swap_id} already finalized; refund rejected")
    return _withdraw_value(pool, rec, tol)


def timeout_swap(pool: PoolView, registry: Registry, swap_id: str,
                 tol: float = VALUE_TOL) -> float | None:
    """Refund a swap that is still pending at its timeout; no-op otherwise."""
    rec = _outgoing(registry, swap_id)
    if rec.status != PENDING:
        return None
    return _withdraw_value(pool, rec, tol)
