"""Command-line entry point: ``xamm run | check | sweep``.

Exit status: 0 success, 1 invariant violation (the report is still
written), 2 unreadable or invalid input.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from decimal import ROUND_FLOOR, Decimal
from pathlib import Path

from .codec import fmt_num, parse_num
from .curves import VALUE_TOL
from .errors import AmmError, InvariantViolation, ValidationError
from .relay import Report, run_scenario
from .scenario import Scenario, load_scenario

EXIT_OK, EXIT_VIOLATION, EXIT_INVALID = 0, 1, 2
FORMATS = ("table", "structured", "delimited")
GRID_PARAMS = ("amplification", "fee", "drop_rate", "dup_rate", "seed")
RECEIPT_COLUMNS = ("swap_id", "source", "dest", "asset_in", "asset_out", "amount_in",
                   "fee_paid", "amount_out", "refunded", "effective_price", "slippage",
                   "status", "initiated_at", "resolved_at")
SUMMARY_COLUMNS = ("max_slippage", "deviation_max", "final_deviation", "refund_count",
                   "swaps", "status")


def quantize_down(s: str | None, places: int = 6) -> str:
    """Round a decimal string toward -inf for display (pool-favourable for outputs)."""
    if s is None:
        return "-"
    return str(Decimal(s).quantize(Decimal(1).scaleb(-places), rounding=ROUND_FLOOR))


def format_table(report: Report) -> str:
    d = report.data
    out = [f"scenario {d['scenario']}  seed {d['seed']}  generator {d['generator']}  "
           f"schema v{d['schema_version']}"]
    cols = ("swap_id", "source", "dest", "amount_in", "amount_out", "effective_price",
            "status")
    rows = [cols] + [tuple(r["swap_id"] if c == "swap_id" else
                           quantize_down(r[c]) if c in ("amount_in", "amount_out",
                                                        "effective_price") else str(r[c])
                           for c in cols) for r in d["receipts"]]
    widths = [max(len(r[i]) for r in rows) for i in range(len(cols))]
    out += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in rows]
    out.append("")
    for k, v in d["summary"].items():
        out.append(f"{k:>16}: {v}")
    out.append(f"{'locality':>16}: {d['audit']['locality']}")
    out.append(f"{'violations':>16}: {len(d['violations'])}")
    out += [f"  ! {v}" for v in d["violations"]]
    return "\n".join(out) + "\n"


def format_delimited(report: Report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECEIPT_COLUMNS)
    for r in report.data["receipts"]:
        w.writerow(["" if r[c] is None else r[c] for c in RECEIPT_COLUMNS])
    w.writerow([])
    w.writerow(("tick", "event", "deviation", "in_flight"))
    for t in report.data["deviation_trace"]:
        w.writerow((t["tick"], t["event"], t["deviation"], t["in_flight"]))
    return buf.getvalue()


def render(report: Report, fmt: str) -> str:
    if fmt == "structured":
        return report.to_json()
    if fmt == "delimited":
        return format_delimited(report)
    return format_table(report)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load(path: str) -> Scenario:
    try:
        return load_scenario(path)
    except OSError as e:
        raise ValidationError(e.strerror or str(e), path) from None


def apply_overrides(scenario: Scenario, args) -> Scenario:
    relay = {}
    if getattr(args, "seed", None) is not None:
        relay["seed"] = args.seed
    if getattr(args, "drop_rate", None) is not None:
        relay["drop_rate"] = parse_num(args.drop_rate, "--drop-rate")
    if getattr(args, "dup_rate", None) is not None:
        relay["dup_rate"] = parse_num(args.dup_rate, "--dup-rate")
    if getattr(args, "reorder", None) is not None:
        relay["reorder"] = args.reorder
    if getattr(args, "refund_timeout", None) is not None:
        relay["refund_timeout"] = args.refund_timeout
    return scenario.with_relay(**relay) if relay else scenario


def apply_point(scenario: Scenario, point: dict) -> Scenario:
    """Return ``scenario`` with one sweep grid point applied."""
    chains = scenario.chains
    if "amplification" in point:
        chains = tuple(replace(c, assets=tuple(
            replace(a, curve=replace(a.curve, amplification=point["amplification"]))
            if a.curve.is_stable else a for a in c.assets)) for c in chains)
    if "fee" in point:
        chains = tuple(replace(c, fee_rate=point["fee"]) for c in chains)
    scenario = replace(scenario, chains=chains)
    relay = {k: point[k] for k in ("drop_rate", "dup_rate") if k in point}
    if "seed" in point:
        relay["seed"] = int(point["seed"])
    return scenario.with_relay(**relay) if relay else scenario


def parse_grid(specs: list[str]) -> dict[str, list[float]]:
    grid: dict[str, list[float]] = {}
    for spec in specs:
        name, sep, values = spec.partition("=")
        name = name.strip().replace("-", "_")
        if not sep or name not in GRID_PARAMS:
            raise ValidationError(f"expected NAME=v1,v2 with NAME in {GRID_PARAMS}", spec)
        vals = [parse_num(v.strip(), f"--grid {name}") for v in values.split(",") if v.strip()]
        if not vals:
            raise ValidationError("no values", f"--grid {name}")
        grid[name] = vals
    return grid


def run_point(scenario: Scenario, point: dict, tol: float) -> dict:
    row = {k: fmt_num(v) for k, v in point.items()}
    try:
        report = run_scenario(apply_point(scenario, point), tol=tol)
        status = "ok"
    except InvariantViolation as e:
        report, status = e.state, "violation"
    except AmmError as e:
        row.update({c: "" for c in SUMMARY_COLUMNS})
        row["status"] = f"error: {e}"
        return row
    s = report.data["summary"]
    row.update({"max_slippage": s["max_slippage"], "deviation_max": s["max_residual"],
                "final_deviation": s["final_deviation"] or "",
                "refund_count": str(s["refunded"]), "swaps": str(s["swaps"]),
                "status": status})
    return row


def sweep(scenario: Scenario, grid: dict[str, list[float]], tol: float = VALUE_TOL,
          jobs: int = 1) -> list[dict]:
    """Run every grid point; rows come back sorted by grid point."""
    names = sorted(grid)
    points = sorted(itertools.product(*(grid[n] for n in names)))
    dicts = [dict(zip(names, p)) for p in points]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            return list(ex.map(run_point, [scenario] * len(dicts), dicts,
                               [tol] * len(dicts)))
    return [run_point(scenario, p, tol) for p in dicts]


def format_sweep(rows: list[dict], names: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = list(names) + list(SUMMARY_COLUMNS)
    w.writerow(header)
    for r in rows:
        w.writerow([r[c] for c in header])
    return buf.getvalue()


def cmd_run(args) -> int:
    scenario = apply_overrides(_load(args.scenario), args)
    try:
        report = run_scenario(scenario, tol=args.tol)
        code = EXIT_OK
    except InvariantViolation as e:
        report, code = e.state, EXIT_VIOLATION
    _emit(render(report, args.format), args.out)
    if code:
        print(f"invariant violation: {report.violations[0]}", file=sys.stderr)
    return code


def cmd_check(args) -> int:
    scenario = _load(args.scenario)
    print(f"ok: {scenario.name} ({len(scenario.chains)} chains, "
          f"{len(scenario.all_events())} events)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    scenario = apply_overrides(_load(args.scenario), args)
    grid = parse_grid(args.grid or [])
    if not grid:
        raise ValidationError("empty parameter grid", "--grid")
    rows = sweep(scenario, grid, args.tol, args.jobs)
    _emit(format_sweep(rows, sorted(grid)), args.out)
    return EXIT_VIOLATION if any(r["status"] != "ok" for r in rows) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xamm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, faults=True):
        sp.add_argument("scenario", help="scenario JSON file")
        if not faults:
            return
        sp.add_argument("--seed", type=int)
        sp.add_argument("--tol", type=float, default=VALUE_TOL,
                        help="inversion tolerance in value units (default %(default)s)")
        sp.add_argument("--drop-rate")
        sp.add_argument("--dup-rate")
        sp.add_argument("--reorder", action=argparse.BooleanOptionalAction, default=None)
        sp.add_argument("--refund-timeout", type=int)
        sp.add_argument("--out", help="write the artifact here instead of stdout")

    run = sub.add_parser("run", help="run a scenario and emit its report")
    common(run)
    run.add_argument("--format", choices=FORMATS, default="table")
    run.set_defaults(func=cmd_run)

    check = sub.add_parser("check", help="validate a scenario without running it")
    common(check, faults=False)
    check.set_defaults(func=cmd_check)

    sw = sub.add_parser("sweep", help="run a scenario over a parameter grid")
    common(sw)
    sw.add_argument("--grid", action="append", metavar="NAME=V1,V2",
                    help=f"grid axis, NAME in {', '.join(GRID_PARAMS)}; repeatable")
    sw.add_argument("--jobs", type=int, default=1)
    sw.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
