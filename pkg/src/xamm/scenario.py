"""Scenario files: parsing, validation and random swap generation.

A scenario is a JSON document. Every number that is not a tick count or
seed is a decimal *string*, e.g.::

    {
      "schema_version": 1,
      "name": "two-chain",
      "chains": [
        {"id": "eth", "fee_rate": "0",
         "assets": [{"id": "A", "amount": "100",
                     "curve": {"kind": "volatile", "weight": "1"}}]},
        {"id": "sol", "assets": [{"id": "B", "amount": "400",
                     "curve": {"kind": "volatile", "weight": "1"}}]}
      ],
      "relay": {"seed": 7, "min_delay": 1, "max_delay": 3,
                "drop_rate": "0", "dup_rate": "0", "reorder": false,
                "refund_timeout": 20},
      "events": [
        {"at": 0, "type": "swap", "source": "eth", "asset_in": "A",
         "amount": "10", "dest": "sol", "asset_out": "B", "min_out": "0"}
      ],
      "random_swaps": {"count": 100, "max_fraction": "0.1"},
      "stop": {"max_ticks": 100000}
    }
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .codec import fmt_num, parse_num
from .curves import STABLE, VOLATILE, Curve
from .errors import DomainError, ValidationError
from .pool import FOUNDER

SCHEMA_VERSION = 1
EVENT_TYPES = ("swap", "add_liquidity", "remove_liquidity", "set_fee", "faults", "corrupt")
DEFAULT_MAX_TICKS = 1_000_000


@dataclass(frozen=True)
class RelayConfig:
    seed: int = 0
    min_delay: int = 1
    max_delay: int = 1
    drop_rate: float = 0.0
    dup_rate: float = 0.0
    reorder: bool = False
    refund_timeout: int | None = None

    def __post_init__(self):
        if not (isinstance(self.min_delay, int) and isinstance(self.max_delay, int)):
            raise ValidationError("delays must be integers", "relay")
        if not 0 <= self.min_delay <= self.max_delay:
            raise ValidationError(
                f"need 0 <= min_delay <= max_delay, got {self.min_delay}, {self.max_delay}",
                "relay")
        for name in ("drop_rate", "dup_rate"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0 and not (name == "drop_rate" and p == 1.0):
                raise ValidationError(f"{name} must be in [0, 1), got {p!r}", f"relay.{name}")
        if self.refund_timeout is not None and not (
                isinstance(self.refund_timeout, int) and self.refund_timeout > 0):
            raise ValidationError("refund_timeout must be a positive integer",
                                  "relay.refund_timeout")

    def to_dict(self) -> dict:
        return {"seed": self.seed, "min_delay": self.min_delay, "max_delay": self.max_delay,
                "drop_rate": fmt_num(self.drop_rate), "dup_rate": fmt_num(self.dup_rate),
                "reorder": self.reorder, "refund_timeout": self.refund_timeout}


@dataclass(frozen=True)
class AssetSpec:
    asset_id: str
    amount: float
    curve: Curve


@dataclass(frozen=True)
class ChainSpec:
    chain_id: str
    assets: tuple[AssetSpec, ...]
    fee_rate: float = 0.0


@dataclass(frozen=True)
class Event:
    at: int
    kind: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Scenario:
    name: str
    chains: tuple[ChainSpec, ...]
    events: tuple[Event, ...]
    relay: RelayConfig = RelayConfig()
    max_ticks: int = DEFAULT_MAX_TICKS
    founder: str = FOUNDER
    random_swaps: dict | None = None

    def chain(self, chain_id: str) -> ChainSpec:
        for c in self.chains:
            if c.chain_id == chain_id:
                return c
        raise KeyError(chain_id)

    def with_relay(self, **changes) -> Scenario:
        return replace(self, relay=replace(self.relay, **changes))

    def all_events(self) -> list[Event]:
        """Explicit events plus generated random swaps, in scheduling order."""
        events = list(self.events)
        if self.random_swaps:
            events += generate_swaps(self, **self.random_swaps)
        return sorted(events, key=lambda e: e.at)  # stable: file order within a tick


def generate_swaps(scenario: Scenario, count: int, max_fraction: float = 0.1,
                   min_fraction: float = 0.001, start: int = 0, spacing: int = 1,
                   min_out: float = 0.0) -> list[Event]:
    """Random cross-chain swaps sized as fractions of the initial input balance."""
    rng = random.Random(f"swaps:{scenario.relay.seed}")
    assets = [(c.chain_id, a) for c in scenario.chains for a in c.assets]
    events = []
    for k in range(count):
        src, a_in = rng.choice(assets)
        others = [x for x in assets if x[0] != src] or [x for x in assets if x[1] is not a_in]
        dst, a_out = rng.choice(others)
        amount = a_in.amount * rng.uniform(min_fraction, max_fraction)
        events.append(Event(start + k * spacing, "swap", {
            "source": src, "asset_in": a_in.asset_id, "amount": amount,
            "dest": dst, "asset_out": a_out.asset_id, "min_out": min_out}))
    return events


# -- parsing -------------------------------------------------------------------

def _require(d: Any, key: str, where: str):
    if not isinstance(d, dict):
        raise ValidationError("expected an object", where)
    if key not in d:
        raise ValidationError(f"missing field {key!r}", where)
    return d[key]


def _int(v, where: str, minimum: int = 0) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ValidationError(f"expected an integer >= {minimum}, got {v!r}", where)
    return v


def _curve(d, where: str, amount: float) -> Curve:
    kind = _require(d, "kind", where)
    weight = parse_num(_require(d, "weight", where), f"{where}.weight")
    try:
        if kind == VOLATILE:
            return Curve.volatile(weight)
        if kind == STABLE:
            xs = d.get("x_stable")
            xs = amount if xs is None else parse_num(xs, f"{where}.x_stable")
            amp = parse_num(_require(d, "amplification", where), f"{where}.amplification")
            return Curve.stable(weight, xs, amp)
    except DomainError as e:
        raise ValidationError(str(e), where) from None
    raise ValidationError(f"unknown curve kind {kind!r}", f"{where}.kind")


def _positive(d, key, where) -> float:
    x = parse_num(_require(d, key, where), f"{where}.{key}")
    if not x > 0:
        raise ValidationError(f"must be > 0, got {x!r}", f"{where}.{key}")
    return x


def _rate(v, where) -> float:
    x = parse_num(v, where)
    if not 0 <= x < 1:
        raise ValidationError(f"must be in [0, 1), got {x!r}", where)
    return x


def _relay(d, where="relay") -> RelayConfig:
    if d is None:
        return RelayConfig()
    if not isinstance(d, dict):
        raise ValidationError("expected an object", where)
    kw = {}
    for key in ("seed", "min_delay", "max_delay"):
        if key in d:
            kw[key] = _int(d[key], f"{where}.{key}")
    for key in ("drop_rate", "dup_rate"):
        if key in d:
            kw[key] = parse_num(d[key], f"{where}.{key}")
    if "reorder" in d:
        if not isinstance(d["reorder"], bool):
            raise ValidationError("expected true/false", f"{where}.reorder")
        kw["reorder"] = d["reorder"]
    if d.get("refund_timeout") is not None:
        kw["refund_timeout"] = _int(d["refund_timeout"], f"{where}.refund_timeout", 1)
    if "max_delay" in kw and "min_delay" not in kw:
        kw["min_delay"] = min(1, kw["max_delay"])
    if "min_delay" in kw and "max_delay" not in kw:
        kw["max_delay"] = kw["min_delay"]
    return RelayConfig(**kw)


def _event(d, where: str, hosted: dict[str, set[str]]) -> Event:
    at = _int(_require(d, "at", where), f"{where}.at")
    kind = _require(d, "type", where)
    if kind not in EVENT_TYPES:
        raise ValidationError(f"unknown event type {kind!r}", f"{where}.type")

    def chain_asset(chain_key, asset_key):
        chain = _require(d, chain_key, where)
        if chain not in hosted:
            raise ValidationError(f"unknown chain {chain!r}", f"{where}.{chain_key}")
        if asset_key is not None:
            asset = _require(d, asset_key, where)
            if asset not in hosted[chain]:
                raise ValidationError(f"unknown asset {asset!r} on chain {chain!r}",
                                      f"{where}.{asset_key}")
            return chain, asset
        return chain, None

    p: dict[str, Any] = {}
    if kind == "swap":
        p["source"], p["asset_in"] = chain_asset("source", "asset_in")
        p["dest"], p["asset_out"] = chain_asset("dest", "asset_out")
        p["amount"] = _positive(d, "amount", where)
        p["min_out"] = parse_num(d.get("min_out", "0"), f"{where}.min_out")
        if p["min_out"] < 0:
            raise ValidationError("must be >= 0", f"{where}.min_out")
    elif kind == "add_liquidity":
        p["provider"] = str(_require(d, "provider", where))
        p["fraction"] = _positive(d, "fraction", where)
    elif kind == "remove_liquidity":
        p["provider"] = str(_require(d, "provider", where))
        p["shares"] = _positive(d, "shares", where)
    elif kind == "set_fee":
        p["chain"], _ = chain_asset("chain", None)
        p["fee_rate"] = _rate(_require(d, "fee_rate", where), f"{where}.fee_rate")
    elif kind == "faults":
        for key in ("drop_rate", "dup_rate"):
            if key in d:
                p[key] = parse_num(d[key], f"{where}.{key}")
        if "reorder" in d:
            p["reorder"] = bool(d["reorder"])
        if set(d) - {"at", "type", "drop_rate", "dup_rate", "reorder"}:
            raise ValidationError("faults events may only set drop_rate, dup_rate, reorder",
                                  where)
    elif kind == "corrupt":
        p["chain"], p["asset"] = chain_asset("chain", "asset")
        p["balance"] = parse_num(_require(d, "balance", where), f"{where}.balance")
    return Event(at, kind, p)


def parse_scenario(data: dict | str) -> Scenario:
    """Validate a scenario document (parsed JSON or raw text)."""
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as e:
            raise ValidationError(e.msg, f"line {e.lineno}, column {e.colno}") from None
    if not isinstance(data, dict):
        raise ValidationError("scenario must be a JSON object")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValidationError(f"unsupported schema_version {version!r}", "schema_version")
    raw_chains = _require(data, "chains", "scenario")
    if not isinstance(raw_chains, list) or not raw_chains:
        raise ValidationError("need a non-empty list", "chains")
    chains, hosted = [], {}
    for ci, c in enumerate(raw_chains):
        where = f"chains[{ci}]"
        cid = _require(c, "id", where)
        if not isinstance(cid, str) or not cid:
            raise ValidationError("chain id must be a non-empty string", f"{where}.id")
        if cid in hosted:
            raise ValidationError(f"duplicate chain id {cid!r}", f"{where}.id")
        fee = _rate(c.get("fee_rate", "0"), f"{where}.fee_rate")
        raw_assets = _require(c, "assets", where)
        if not isinstance(raw_assets, list) or not raw_assets:
            raise ValidationError("need a non-empty list", f"{where}.assets")
        assets, ids = [], set()
        for ai, a in enumerate(raw_assets):
            aw = f"{where}.assets[{ai}]"
            aid = _require(a, "id", aw)
            if aid in ids:
                raise ValidationError(f"duplicate asset id {aid!r}", f"{aw}.id")
            ids.add(aid)
            amount = _positive(a, "amount", aw)
            curve = _curve(_require(a, "curve", aw), f"{aw}.curve", amount)
            if curve.is_stable and abs(curve.x_stable - amount) > 1e-12 * amount:
                raise ValidationError("x_stable must equal the initial amount",
                                      f"{aw}.curve.x_stable")
            assets.append(AssetSpec(aid, amount, curve))
        hosted[cid] = ids
        chains.append(ChainSpec(cid, tuple(assets), fee))
    if sum(len(c.assets) for c in chains) < 2:
        raise ValidationError("a pool needs at least two assets", "chains")
    raw_events = data.get("events", [])
    if not isinstance(raw_events, list):
        raise ValidationError("expected a list", "events")
    events = tuple(_event(e, f"events[{i}]", hosted) for i, e in enumerate(raw_events))
    random_swaps = data.get("random_swaps")
    if random_swaps is not None:
        rs = {"count": _int(_require(random_swaps, "count", "random_swaps"),
                            "random_swaps.count")}
        for key in ("max_fraction", "min_fraction", "min_out"):
            if key in random_swaps:
                rs[key] = parse_num(random_swaps[key], f"random_swaps.{key}")
        for key in ("start", "spacing"):
            if key in random_swaps:
                rs[key] = _int(random_swaps[key], f"random_swaps.{key}")
        if not 0 < rs.get("min_fraction", 0.001) <= rs.get("max_fraction", 0.1):
            raise ValidationError("need 0 < min_fraction <= max_fraction", "random_swaps")
        random_swaps = rs
    stop = data.get("stop") or {}
    max_ticks = _int(stop.get("max_ticks", DEFAULT_MAX_TICKS), "stop.max_ticks", 1)
    return Scenario(str(data.get("name", "scenario")), tuple(chains), events,
                    _relay(data.get("relay")), max_ticks,
                    str(data.get("founder", FOUNDER)), random_swaps)


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text())
