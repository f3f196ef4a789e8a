"""Deterministic multi-chain simulator with a faulty message relay.

Chains are independent state machines. Everything that happens is an item
on one priority queue ordered by ``(tick, insertion sequence)``: scenario
events, message deliveries and refund timeouts. Handlers fetch chain state
through :meth:`World.chain`, which records the access so
:func:`audit_locality` can confirm that each handler touched one chain.

Relay faults:

* ``drop_rate`` loses forward swap messages. Responses (acks and refunds)
  are never dropped, only delayed, duplicated or reordered.
* ``dup_rate`` schedules a second copy with an independent delay.
* without ``reorder`` each directed link is FIFO.

With ``refund_timeout = T`` a swap initiated at tick ``t`` expires on the
destination at ``t + T`` and is refunded locally by the source at
``t + T + max_delay`` if no response has arrived by then. Responses sent
before expiry arrive within ``max_delay``, so the timeout can never race a
successful execution.

All randomness comes from one ``random.Random(seed)`` (MT19937) instance.
"""
from __future__ import annotations

import heapq
import json
import math
import random
from dataclasses import dataclass, replace
from typing import Any, Callable

from . import curves, protocol
from .codec import fmt_num
from .curves import DUST, VALUE_TOL
from .errors import AmmError, InvariantViolation, UnknownSwap
from .pool import (PoolView, add_liquidity, init_pool, ledger_to_dict,
                   pool_to_dict, remove_liquidity, value_deviation)
from .protocol import (FINALIZED, PENDING, REFUNDED, REFUNDING, Registry, SwapMessage,
                       SwapReceipt)
from .scenario import Event, RelayConfig, Scenario

REPORT_SCHEMA_VERSION = 1
GENERATOR = "MT19937 (Python random.Random, seed version 2)"
COORDINATED = ("add_liquidity", "remove_liquidity")


@dataclass
class ChainState:
    chain_id: str
    pool: PoolView
    registry: Registry
    local_time: int = 0


@dataclass
class SwapTrace:
    """Simulator-side bookkeeping for one swap (report material, not chain state)."""
    swap_id: str
    source: str
    dest: str
    asset_in: str
    asset_out: str
    amount_in: float
    fee_paid: float
    value: float
    initiated_at: int
    spot_rate: float
    status: str = PENDING
    amount_out: float | None = None
    refunded: float | None = None
    resolved_at: int | None = None
    executions: int = 0
    refunds: int = 0

    def to_dict(self) -> dict:
        def num(x):
            return None if x is None else fmt_num(x)
        eff = slip = None
        if self.amount_out:
            eff = self.amount_in / self.amount_out
            slip = 1.0 - (self.amount_out / self.amount_in) / self.spot_rate
        return {
            "swap_id": self.swap_id, "source": self.source, "dest": self.dest,
            "asset_in": self.asset_in, "asset_out": self.asset_out,
            "amount_in": num(self.amount_in), "fee_paid": num(self.fee_paid),
            "value": num(self.value), "status": self.status,
            "amount_out": num(self.amount_out), "refunded": num(self.refunded),
            "effective_price": num(eff), "slippage": num(slip),
            "initiated_at": self.initiated_at, "resolved_at": self.resolved_at,
        }


@dataclass
class Report:
    data: dict

    @property
    def violations(self) -> list[str]:
        return self.data["violations"]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=1) + "\n"


class World:
    def __init__(self, scenario: Scenario, relay: RelayConfig | None = None, *,
                 tol: float = VALUE_TOL, check_tol: float = 1e-9):
        self.scenario = scenario
        self.config = self.initial_config = relay or scenario.relay
        self.tol = tol
        self.check_tol = check_tol
        self.rng = random.Random(self.config.seed)
        deposits = [(c.chain_id, a.asset_id, a.amount, a.curve)
                    for c in scenario.chains for a in c.assets]
        fees = {c.chain_id: c.fee_rate for c in scenario.chains}
        pools, self.ledger = init_pool(deposits, fees, scenario.founder)
        self.chains = {cid: ChainState(cid, pool, Registry(cid)) for cid, pool in pools.items()}
        self.now = 0
        self._queue: list = []
        self._seq = 0
        self._link_last: dict[tuple[str, str], int] = {}
        self._touched: set[str] = set()
        self.access_log: list[tuple[int, str, tuple[str, ...]]] = []
        self.swaps: dict[str, SwapTrace] = {}
        self.trace: list[dict] = []
        self.lp_events: list[dict] = []
        self.rejected: list[str] = []
        self.violations: list[str] = []
        self.faults = {"dropped": 0, "duplicated": 0, "redundant_deliveries": 0}
        self.events_processed = 0
        self.handlers: dict[str, Callable[[World, Any], Any]] = {
            "swap": _on_swap, "add_liquidity": _on_add_liquidity,
            "remove_liquidity": _on_remove_liquidity, "set_fee": _on_set_fee,
            "faults": _on_faults, "corrupt": _on_corrupt,
            "deliver": _on_deliver, "timeout": _on_timeout,
        }

    # -- plumbing --------------------------------------------------------------

    def chain(self, chain_id: str) -> ChainState:
        """Fetch a chain for a handler, recording the access."""
        self._touched.add(chain_id)
        state = self.chains[chain_id]
        state.local_time += 1
        return state

    def schedule(self, tick: int, kind: str, payload: Any) -> None:
        heapq.heappush(self._queue, (tick, self._seq, kind, payload))
        self._seq += 1

    def send(self, msg: SwapMessage, src: str, dst: str, droppable: bool) -> None:
        cfg = self.config
        if droppable and cfg.drop_rate > 0 and self.rng.random() < cfg.drop_rate:
            self.faults["dropped"] += 1
            return
        copies = 1
        if cfg.dup_rate > 0 and self.rng.random() < cfg.dup_rate:
            copies = 2
            self.faults["duplicated"] += 1
        wire = msg.to_wire()
        for _ in range(copies):
            t = self.now + self.rng.randint(cfg.min_delay, cfg.max_delay)
            if not cfg.reorder:
                t = max(t, self._link_last.get((src, dst), t))
                self._link_last[src, dst] = t
            self.schedule(t, "deliver", (dst, wire))

    @property
    def pending(self) -> bool:
        return bool(self._queue)

    def in_flight_value(self) -> float:
        """Value credited at a source but neither executed nor refunded yet."""
        vals = []
        for s in self.swaps.values():
            executed = isinstance(self.chains[s.dest].registry.incoming.get(s.swap_id),
                                  SwapReceipt)
            refunded = self.chains[s.source].registry.outgoing[s.swap_id].status == REFUNDED
            if not executed and not refunded:
                vals.append(s.value)
        return math.fsum(vals)

    def deviation(self) -> float:
        return value_deviation({cid: c.pool for cid, c in self.chains.items()})

    def quiescent(self) -> bool:
        return all(s.status in (FINALIZED, REFUNDED) for s in self.swaps.values())

    def state_dump(self) -> dict:
        return {"tick": self.now,
                "chains": [pool_to_dict(c.pool) for c in self.chains.values()],
                "ledger": ledger_to_dict(self.ledger)}

    # -- auditing --------------------------------------------------------------

    def check_invariants(self) -> list[str]:
        found = []
        for c in self.chains.values():
            for a in c.pool.assets.values():
                if not (math.isfinite(a.balance) and a.balance >= DUST * (1 - 1e-9)):
                    found.append(f"{c.chain_id}/{a.asset_id}: balance {a.balance!r} below dust")
                if not (math.isfinite(a.reference) and a.reference > 0):
                    found.append(f"{c.chain_id}/{a.asset_id}: reference {a.reference!r} not positive")
        if not self.ledger.is_consistent():
            found.append("share positions do not sum to total supply")
        for s in self.swaps.values():
            if s.executions > 1 or s.refunds > 1 or (s.executions and s.refunds):
                found.append(f"swap {s.swap_id} applied more than once "
                             f"(executed {s.executions}, refunded {s.refunds})")
        if not found:
            residual = self.deviation() - self.in_flight_value()
            if abs(residual) > self.check_tol * (self.events_processed + 1):
                found.append(f"value ledger residual {residual!r} exceeds tolerance")
        return found


# -- handlers ------------------------------------------------------------------

def _on_swap(world: World, ev: Event):
    p = ev.params
    # spot rate for reporting only; read outside the handler's chain access
    src_asset = world.chains[p["source"]].pool.asset(p["asset_in"])
    dst_asset = world.chains[p["dest"]].pool.assets.get(p["asset_out"])
    spot = (curves.price(src_asset.curve, src_asset.balance)
            / curves.price(dst_asset.curve, dst_asset.balance)) if dst_asset else math.nan
    src = world.chain(p["source"])
    timeout = world.config.refund_timeout
    expires = world.now + timeout if timeout is not None else None
    msg = protocol.initiate_swap(src.pool, src.registry, p["asset_in"], p["amount"],
                                 p["dest"], p["asset_out"], p["min_out"], expires_at=expires)
    world.swaps[msg.swap_id] = SwapTrace(
        msg.swap_id, msg.source_chain, msg.dest_chain, msg.asset_in, msg.asset_out,
        msg.amount_in, msg.fee_paid, msg.value, world.now, spot)
    world.send(msg, msg.source_chain, msg.dest_chain, droppable=True)
    if timeout is not None:
        world.schedule(world.now + timeout + world.config.max_delay, "timeout",
                       (msg.source_chain, msg.swap_id))
    return msg.swap_id


def _on_deliver(world: World, payload):
    chain_id, wire = payload
    msg = SwapMessage.from_wire(wire)
    chain = world.chain(chain_id)
    trace = world.swaps.get(msg.swap_id)
    if msg.status == PENDING:
        if msg.swap_id in chain.registry.incoming:
            world.faults["redundant_deliveries"] += 1
            return "duplicate"
        outcome = protocol.finalize_swap(chain.pool, msg, chain.registry, world.tol,
                                         now=world.now)
        if isinstance(outcome, SwapReceipt):
            trace.executions += 1
            trace.amount_out = outcome.amount_out
            world.send(protocol.ack_message(msg, outcome), chain_id, msg.source_chain,
                       droppable=False)
            return "executed"
        world.send(outcome, chain_id, msg.source_chain, droppable=False)
        return "refund-requested"
    if msg.status == FINALIZED:
        before = chain.registry.outgoing[msg.swap_id].status
        try:
            protocol.apply_ack(chain.registry, msg)
        except AmmError as e:
            world.violations.append(str(e))
            return "ack-rejected"
        if before == PENDING:
            trace.status, trace.resolved_at = FINALIZED, world.now
            return "finalized"
        world.faults["redundant_deliveries"] += 1
        return "duplicate"
    if msg.status == REFUNDING:
        try:
            rec = chain.registry.outgoing[msg.swap_id]
        except KeyError:
            world.rejected.append(f"tick {world.now}: refund for unknown swap {msg.swap_id}")
            return "rejected"
        if rec.status == REFUNDED:
            world.faults["redundant_deliveries"] += 1
            return "duplicate"
        try:
            amount = protocol.apply_refund(chain.pool, msg, chain.registry, world.tol)
        except UnknownSwap:
            world.rejected.append(f"tick {world.now}: refund for unknown swap {msg.swap_id}")
            return "rejected"
        _mark_refunded(world, trace, amount)
        return "refunded"
    world.rejected.append(f"tick {world.now}: unexpected {msg.status} message {msg.swap_id}")
    return "rejected"


def _mark_refunded(world: World, trace: SwapTrace, amount: float) -> None:
    trace.refunds += 1
    trace.status, trace.refunded, trace.resolved_at = REFUNDED, amount, world.now


def _on_timeout(world: World, payload):
    chain_id, swap_id = payload
    chain = world.chain(chain_id)
    amount = protocol.timeout_swap(chain.pool, chain.registry, swap_id, world.tol)
    if amount is None:
        return "noop"
    _mark_refunded(world, world.swaps[swap_id], amount)
    return "timed-out"


def _pools(world: World) -> dict[str, PoolView]:
    return {cid: world.chain(cid).pool for cid in world.chains}


def _on_add_liquidity(world: World, ev: Event):
    minted = add_liquidity(_pools(world), world.ledger, ev.params["provider"],
                           ev.params["fraction"])
    world.lp_events.append({"tick": world.now, "type": "add_liquidity",
                            "provider": ev.params["provider"],
                            "fraction": fmt_num(ev.params["fraction"]),
                            "shares": fmt_num(minted)})
    return minted


def _on_remove_liquidity(world: World, ev: Event):
    payout = remove_liquidity(_pools(world), world.ledger, ev.params["provider"],
                              ev.params["shares"])
    world.lp_events.append({"tick": world.now, "type": "remove_liquidity",
                            "provider": ev.params["provider"],
                            "shares": fmt_num(ev.params["shares"]),
                            "payout": {f"{c}/{a}": fmt_num(v)
                                       for (c, a), v in sorted(payout.items())}})
    return payout


def _on_set_fee(world: World, ev: Event):
    world.chain(ev.params["chain"]).pool.fee_rate = ev.params["fee_rate"]


def _on_faults(world: World, ev: Event):
    world.config = replace(world.config, **ev.params)


def _on_corrupt(world: World, ev: Event):
    # test fixture: writes state directly, bypassing every guard
    world.chain(ev.params["chain"]).pool.asset(ev.params["asset"]).balance = ev.params["balance"]


# -- driver ----------------------------------------------------------------------

def step(world: World) -> dict | None:
    """Process the earliest queued item; ``None`` when the queue is empty."""
    if not world._queue:
        return None
    tick, _, kind, payload = heapq.heappop(world._queue)
    world.now = tick
    world._touched = set()
    label = payload.kind if isinstance(payload, Event) else kind
    handler = world.handlers[label]
    try:
        result = handler(world, payload)
        error = None
    except AmmError as e:
        result, error = None, f"{type(e).__name__}: {e}"
        world.rejected.append(f"tick {tick}: {label} rejected ({error})")
    world.events_processed += 1
    world.access_log.append((tick, label, tuple(sorted(world._touched))))
    found = world.check_invariants()
    if found:
        world.violations.extend(f"tick {tick} after {label}: {v}" for v in found)
    else:
        world.trace.append({"tick": tick, "event": label,
                            "deviation": fmt_num(world.deviation()),
                            "in_flight": fmt_num(world.in_flight_value())})
    return {"tick": tick, "kind": label, "chains": sorted(world._touched),
            "result": result, "error": error}


def audit_locality(world: World, coordinated=COORDINATED) -> bool:
    """True iff every non-coordinated handler touched at most one chain."""
    return all(len(chains) <= 1 for _, label, chains in world.access_log
               if label not in coordinated)


def multi_chain_events(world: World, coordinated=COORDINATED) -> list[dict]:
    return [{"tick": t, "event": label, "chains": list(chains)}
            for t, label, chains in world.access_log
            if label in coordinated and len(chains) > 1]


def build_world(scenario: Scenario, relay: RelayConfig | None = None, **kw) -> World:
    world = World(scenario, relay, **kw)
    for ev in scenario.all_events():
        world.schedule(ev.at, ev.kind, ev)
    return world


def run_world(world: World) -> Report:
    while world._queue and not world.violations:
        if world._queue[0][0] > world.scenario.max_ticks:
            break
        step(world)
    report = make_report(world)
    if world.violations:
        raise InvariantViolation(world.violations[0], report)
    return report


def run_scenario(scenario: Scenario, relay: RelayConfig | None = None, *,
                 tol: float = VALUE_TOL, check_tol: float = 1e-9) -> Report:
    """Run a scenario to completion.

    Raises :class:`InvariantViolation` (carrying the partial report as
    ``.state``) on the first event that breaks an invariant.
    """
    return run_world(build_world(scenario, relay, tol=tol, check_tol=check_tol))


def make_report(world: World) -> Report:
    timeout = world.initial_config.refund_timeout
    quiescent = world.quiescent() and not world._queue
    dev = math.nan if world.violations else world.deviation()
    if quiescent and not world.violations and abs(dev) > world.check_tol * (
            world.events_processed + 1):
        world.violations.append(f"quiescent deviation {dev!r} exceeds tolerance")
    if timeout is not None:
        bound = timeout + world.initial_config.max_delay
        for s in world.swaps.values():
            late = s.resolved_at is None or s.resolved_at - s.initiated_at > bound
            if late and world.now - s.initiated_at >= bound:
                world.violations.append(f"swap {s.swap_id} unresolved after {bound} ticks")
    swaps = [s.to_dict() for s in world.swaps.values()]
    slips = [float(s["slippage"]) for s in swaps if s["slippage"] is not None]
    residuals = [abs(float(t["deviation"]) - float(t["in_flight"])) for t in world.trace]
    data = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "generator": GENERATOR,
        "seed": world.initial_config.seed,
        "scenario": world.scenario.name,
        "relay": world.initial_config.to_dict(),
        "receipts": swaps,
        "lp_events": world.lp_events,
        "final_state": world.state_dump(),
        "deviation_trace": world.trace,
        "faults": dict(world.faults),
        "audit": {"locality": audit_locality(world),
                  "multi_chain_events": multi_chain_events(world),
                  "rejected": world.rejected},
        "summary": {
            "events": world.events_processed,
            "swaps": len(swaps),
            "finalized": sum(s["status"] == FINALIZED for s in swaps),
            "refunded": sum(s["status"] == REFUNDED for s in swaps),
            "unresolved": sum(s["status"] not in (FINALIZED, REFUNDED) for s in swaps),
            "quiescent": quiescent,
            "final_deviation": None if math.isnan(dev) else fmt_num(dev),
            "max_residual": fmt_num(max(residuals, default=0.0)),
            "max_slippage": fmt_num(max(slips, default=0.0)),
            "final_tick": world.now,
        },
        "violations": world.violations,
    }
    return Report(data)
