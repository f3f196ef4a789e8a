"""Per-chain pool state: balances, reference points, fees and LP shares.

Each asset keeps a *reference* balance ``x_0`` next to its live balance
``x_n``; its local value is ``value_between(curve, x_0, x_n)``. Swaps move
value between assets. Fees and liquidity events move both ``x_0`` and
``x_n`` (and rescale stable-curve geometry) so they never register as value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import curves
from .codec import fmt_num, parse_num
from .curves import DUST, VALUE_TOL, Curve
from .errors import (DomainError, InsufficientLiquidity, InsufficientShares,
                     SlippageExceeded, UnknownAsset)

FOUNDER = "founder"


@dataclass
class AssetState:
    asset_id: str
    balance: float
    reference: float
    curve: Curve

    def local_value(self) -> float:
        return curves.value_between(self.curve, self.reference, self.balance)

    def shift(self, dx: float) -> None:
        """Change the balance by ``dx`` without changing local value.

        The reference moves by the same ratio and a stable curve's centre
        and width are rescaled with it.
        """
        self.reference += curves.reference_shift(self.reference, self.balance, dx)
        self.curve = curves.scale_curve(self.curve, 1.0 + dx / self.balance)
        self.balance += dx


@dataclass
class PoolView:
    chain_id: str
    assets: dict[str, AssetState] = field(default_factory=dict)
    fee_rate: float = 0.0

    def __post_init__(self):
        check_fee_rate(self.fee_rate)

    def asset(self, asset_id: str) -> AssetState:
        try:
            return self.assets[asset_id]
        except KeyError:
            raise UnknownAsset(asset_id) from None


@dataclass
class ShareLedger:
    total_supply: float = 0.0
    positions: dict[str, float] = field(default_factory=dict)

    def mint(self, provider: str, amount: float) -> None:
        self.positions[provider] = self.positions.get(provider, 0.0) + amount
        self.total_supply += amount

    def burn(self, provider: str, amount: float) -> None:
        held = self.positions.get(provider, 0.0)
        if amount > held:
            raise InsufficientShares(f"{provider!r} holds {held!r}, asked to burn {amount!r}")
        self.positions[provider] = held - amount
        self.total_supply -= amount

    def is_consistent(self, rel: float = 1e-9) -> bool:
        total = math.fsum(self.positions.values())
        return abs(total - self.total_supply) <= rel * max(abs(self.total_supply), 1.0)


def check_fee_rate(fee_rate: float) -> None:
    if not 0.0 <= fee_rate < 1.0:
        raise DomainError(f"fee_rate must be in [0, 1), got {fee_rate!r}")


def init_pool(deposits: Iterable[tuple[str, str, float, Curve]],
              fee_rate: float | Mapping[str, float] = 0.0,
              founder: str = FOUNDER) -> tuple[dict[str, PoolView], ShareLedger]:
    """Create one :class:`PoolView` per chain from ``(chain, asset, amount, curve)``.

    Stable curves are centred on their deposit: ``x_stable`` defaults to the
    deposited amount, and an explicit value must agree with it.
    """
    deposits = list(deposits)
    if len(deposits) < 2:
        raise DomainError("a pool needs at least two assets")
    pools: dict[str, PoolView] = {}
    amounts = []
    for chain_id, asset_id, amount, curve in deposits:
        if not amount > 0:
            raise DomainError(f"deposit of {asset_id!r} must be > 0, got {amount!r}")
        rate = fee_rate.get(chain_id, 0.0) if isinstance(fee_rate, Mapping) else fee_rate
        pool = pools.setdefault(chain_id, PoolView(chain_id, fee_rate=rate))
        if asset_id in pool.assets:
            raise DomainError(f"duplicate asset {asset_id!r} on chain {chain_id!r}")
        if curve.is_stable and not math.isclose(curve.x_stable, amount, rel_tol=1e-12):
            raise DomainError(
                f"x_stable of {asset_id!r} ({curve.x_stable!r}) must equal its deposit {amount!r}")
        pool.assets[asset_id] = AssetState(asset_id, float(amount), float(amount), curve)
        amounts.append(float(amount))
    ledger = ShareLedger()
    ledger.mint(founder, curves.initial_shares(amounts))
    return pools, ledger


def swap_credit(pool: PoolView, asset_id: str, amount: float) -> float:
    """Deposit ``amount`` of an asset; return the value to relay.

    ``fee_rate * amount`` is retained as a fee. The remainder is what moves
    the balance along the curve and determines the value.
    """
    if not amount > 0:
        raise DomainError(f"swap amount must be > 0, got {amount!r}")
    asset = pool.asset(asset_id)
    fee = pool.fee_rate * amount
    net = amount - fee
    old = asset.balance
    value = curves.value_of_change(asset.curve, old, net)
    asset.balance = old + net
    if fee > 0:
        accrue_fee(pool, asset_id, fee)
    return value


def swap_debit(pool: PoolView, asset_id: str, value: float, min_out: float = 0.0,
               tol: float = VALUE_TOL, *, claimed_out: float | None = None) -> float:
    """Withdraw the amount whose value equals ``value``.

    With ``claimed_out`` the search is skipped: the claimed amount is checked
    against ``value`` to within ``tol`` and applied if it verifies.
    State is untouched on any error.
    """
    if not value > 0:
        raise DomainError(f"value must be > 0, got {value!r}")
    asset = pool.asset(asset_id)
    if claimed_out is None:
        out = curves.invert_out(asset.curve, asset.balance, value, tol)
    else:
        out = claimed_out
        if not (0 < out and asset.balance - out >= DUST):
            raise InsufficientLiquidity(f"claimed output {out!r} leaves balance below dust")
        got = -curves.value_of_change(asset.curve, asset.balance, -out)
        if abs(got - value) > tol:
            raise DomainError(f"claimed output carries value {got!r}, expected {value!r}")
    if out < min_out:
        raise SlippageExceeded(out, min_out)
    asset.balance -= out
    return out


def accrue_fee(pool: PoolView, asset_id: str, fee_amount: float) -> None:
    """Add a fee to the balance while keeping the asset's local value fixed."""
    if not fee_amount > 0:
        raise DomainError(f"fee must be > 0, got {fee_amount!r}")
    asset = pool.asset(asset_id)
    asset.shift(fee_amount)


def _all_assets(pools: Mapping[str, PoolView]):
    for pool in pools.values():
        yield from pool.assets.values()


def add_liquidity(pools: Mapping[str, PoolView], ledger: ShareLedger, provider: str,
                  fraction: float) -> float:
    """Deposit ``fraction`` of every current balance; return shares minted."""
    if not fraction > 0:
        raise DomainError(f"deposit fraction must be > 0, got {fraction!r}")
    any_asset = next(_all_assets(pools))
    minted = curves.proportional_shares(fraction * any_asset.balance, any_asset.balance,
                                        ledger.total_supply)
    for asset in _all_assets(pools):
        asset.shift(fraction * asset.balance)
    ledger.mint(provider, minted)
    return minted


def remove_liquidity(pools: Mapping[str, PoolView], ledger: ShareLedger, provider: str,
                     shares: float) -> dict[tuple[str, str], float]:
    """Burn ``shares`` and pay out the same fraction of every balance."""
    if not shares > 0:
        raise DomainError(f"shares must be > 0, got {shares!r}")
    held = ledger.positions.get(provider, 0.0)
    if shares > held:
        raise InsufficientShares(f"{provider!r} holds {held!r} shares, asked {shares!r}")
    fraction = shares / ledger.total_supply
    if fraction >= 1.0:
        raise DomainError("removing the entire supply would empty the pool")
    for asset in _all_assets(pools):
        if asset.balance * (1.0 - fraction) < DUST:
            raise InsufficientLiquidity(f"withdrawal leaves {asset.asset_id!r} below dust")
    payout = {}
    for chain_id, pool in pools.items():
        for asset in pool.assets.values():
            amount = fraction * asset.balance
            payout[chain_id, asset.asset_id] = amount
            asset.shift(-amount)
    ledger.burn(provider, shares)
    return payout


def value_deviation(pools: Mapping[str, PoolView] | Iterable[PoolView]) -> float:
    """Sum of local values across every asset; zero when no value is in flight."""
    views = pools.values() if isinstance(pools, Mapping) else pools
    return math.fsum(a.local_value() for p in views for a in p.assets.values())


# -- snapshots ---------------------------------------------------------------

def curve_to_dict(curve: Curve) -> dict:
    d = {"kind": curve.kind, "weight": fmt_num(curve.weight)}
    if curve.is_stable:
        d["x_stable"] = fmt_num(curve.x_stable)
        d["amplification"] = fmt_num(curve.amplification)
    return d


def curve_from_dict(d: Mapping, where: str = "curve") -> Curve:
    kind = d.get("kind")
    weight = parse_num(d.get("weight"), f"{where}.weight")
    if kind == curves.STABLE:
        return Curve.stable(weight, parse_num(d.get("x_stable"), f"{where}.x_stable"),
                            parse_num(d.get("amplification"), f"{where}.amplification"))
    return Curve(kind, weight)


def pool_to_dict(pool: PoolView) -> dict:
    return {
        "chain_id": pool.chain_id,
        "fee_rate": fmt_num(pool.fee_rate),
        "assets": [
            {"asset_id": a.asset_id, "balance": fmt_num(a.balance),
             "reference": fmt_num(a.reference), "curve": curve_to_dict(a.curve)}
            for a in pool.assets.values()
        ],
    }


def pool_from_dict(d: Mapping) -> PoolView:
    pool = PoolView(d["chain_id"], fee_rate=parse_num(d["fee_rate"], "fee_rate"))
    for a in d["assets"]:
        pool.assets[a["asset_id"]] = AssetState(
            a["asset_id"], parse_num(a["balance"]), parse_num(a["reference"]),
            curve_from_dict(a["curve"]))
    return pool


def ledger_to_dict(ledger: ShareLedger) -> dict:
    return {"total_supply": fmt_num(ledger.total_supply),
            "positions": {k: fmt_num(v) for k, v in sorted(ledger.positions.items())}}
