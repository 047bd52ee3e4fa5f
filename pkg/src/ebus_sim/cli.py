"""Command-line entry point: ``ebus-sim {simulate,tco,sweep,demand}``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import backend
from .demand import demand_summary, generate_day_demand
from .errors import InfeasibleConfigError, ValidationError
from .route import operating_minutes
from .scenario import Scenario, load_scenario
from .sim import SimResult, fleet_comparison, run_simulation
from .sweep import (
    REFERENCE_CHARGER_DELTA_8_10,
    charger_cost_delta,
    default_wait_tolerance,
    figure8_rows,
    figure9_10_rows,
    recommend,
    run_sweep,
    write_figure,
)
from .tco import compute_tco, deviation_lines, emission_cost_comparison, tco_report

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

REFERENCE_DAILY_KWH = 38_110.0  # reported daily electricity; not derivable from distance / efficiency


class Output:
    """Collects files for one command; each write is atomic (temp file + rename)."""

    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.files: dict[str, str] = {}
        out_dir.mkdir(parents=True, exist_ok=True)
        if not os.access(out_dir, os.W_OK):
            raise PermissionError(f"output directory {out_dir} is not writable")

    def write(self, name: str, text: str) -> None:
        data = text.encode("utf-8")
        fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, self.dir / name)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.files[name] = hashlib.sha256(data).hexdigest()

    def json(self, name: str, obj) -> None:
        self.write(name, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")

    def manifest(self, command: str, scenario: Scenario, seeds, started: float) -> None:
        inventory = [{"file": k, "sha256": v} for k, v in sorted(self.files.items())]
        self.json("manifest.json", {
            "command": command,
            "scenario_hash": scenario.digest(),
            "seeds": list(seeds),
            "tool_version": __version__,
            "backend": backend(),
            "files": inventory,
            "wall_clock_s": round(time.perf_counter() - started, 3),
        })


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x: float, nd: int = 6) -> str:
    return f"{x:.{nd}f}"


def _peak_share(scenario: Scenario) -> float:
    cal, dp = scenario.calendar_model(), scenario.demand
    _, peak, off = operating_minutes(cal)
    peak_load = peak * dp.lambda_peak
    total = peak_load + off * dp.lambda_offpeak
    return peak_load / total if total > 0 else 0.0


def _log(args, msg: str) -> None:
    if not args.quiet:
        print(msg, file=sys.stderr)


# -- simulate ---------------------------------------------------------------

def grid_load_csv(res: SimResult) -> str:
    start = res.grid_start_minute
    return _csv(["minute", "kwh"], ((start + i, _num(v)) for i, v in enumerate(res.grid_load_per_minute)))


def per_bus_csv(res: SimResult) -> str:
    rows = ((b, _num(km), _num(kwh)) for b, (km, kwh) in
            enumerate(zip(res.per_bus_distance_km, res.per_bus_energy_kwh)))
    return _csv(["bus_id", "km", "kwh"], rows)


def waits_csv(res: SimResult) -> str:
    w = res.board_minute - res.arrival_minute
    rows = ((i, "" if math.isnan(v) else _num(v)) for i, v in enumerate(w))
    return _csv(["passenger_id", "wait_min"], rows)


def simulate_summary(scenario: Scenario, res: SimResult, seed: int) -> dict:
    out = res.summary()
    out["seed"] = seed
    out["comparison"] = fleet_comparison(res, scenario.baseline, _peak_share(scenario))
    out["deviations"] = [
        f"deviation: daily energy computed {res.total_energy_kwh:.0f} kWh "
        f"(traction {res.traction_energy_kwh:.0f}, auxiliary {res.aux_energy_kwh:.0f}) vs reported "
        f"{REFERENCE_DAILY_KWH:.0f} kWh"
    ]
    return out


def cmd_simulate(scenario: Scenario, seed: int, out: Output, args) -> int:
    route, cal = scenario.route_model(), scenario.calendar_model()
    demand = generate_day_demand(route, cal, scenario.demand, seed)
    res = run_simulation(route, cal, scenario.sim_config(), demand, seed)
    summary = simulate_summary(scenario, res, seed)
    out.json("summary.json", summary)
    out.write("grid_load.csv", grid_load_csv(res))
    out.write("per_bus.csv", per_bus_csv(res))
    out.write("waits.csv", waits_csv(res))
    _log(args, f"avg wait {res.avg_wait_min:.4f} min, {res.passengers_served} served, "
               f"{res.total_distance_km:.0f} km, {res.total_energy_kwh:.0f} kWh")
    if res.strandings:
        _log(args, f"warning: {len(res.strandings)} bus(es) stranded")
    for line in summary["deviations"]:
        _log(args, line)
    return EXIT_OK


# -- tco --------------------------------------------------------------------

def cmd_tco(scenario: Scenario, out: Output, args) -> int:
    include = not args.no_emissions
    d_res = compute_tco(scenario.diesel, include)
    b_res = compute_tco(scenario.beb, include)
    report = tco_report(scenario.diesel, scenario.beb)
    report["emissions_included"] = include
    report["diesel_total"] = d_res.total
    report["beb_total"] = b_res.total
    report["deviations"] = deviation_lines(report)
    out.write("cashflow_diesel.csv", d_res.to_csv())
    out.write("cashflow_beb.csv", b_res.to_csv())
    years = [b_res.start_year + y.year_index for y in b_res.years]
    if include:
        gap = emission_cost_comparison(d_res, b_res)
        out.write("figure11.csv", _csv(
            ["year", "diesel_emission_cost_cumulative", "beb_emission_cost_cumulative"],
            ((y, _num(a, 2), _num(b, 2)) for y, a, b in zip(years, gap["diesel_cumulative"], gap["beb_cumulative"])),
        ))
    else:
        report["figure11"] = "omitted: emission cost disabled"
    out.write("figure12.csv", _csv(
        ["year", "diesel_cumulative_without_emissions", "beb_cumulative_without_emissions"],
        ((y, _num(a, 2), _num(b, 2)) for y, a, b in
         zip(years, d_res.cumulative_without_emissions, b_res.cumulative_without_emissions)),
    ))
    out.write("figure13.csv", _csv(
        ["year", "diesel_cumulative_with_emissions", "beb_cumulative_with_emissions"],
        ((y, _num(a, 2), _num(b, 2)) for y, a, b in
         zip(years, d_res.cumulative_with_emissions, b_res.cumulative_with_emissions)),
    ))
    out.json("tco_summary.json", report)
    _log(args, f"TCO diesel {d_res.total / 1e6:.2f} M, BEB {b_res.total / 1e6:.2f} M")
    for line in report["deviations"]:
        _log(args, line)
    return EXIT_OK


# -- sweep ------------------------------------------------------------------

def cmd_sweep(scenario: Scenario, out: Output, args) -> int:
    grid = scenario.sweep_grid()
    sec = scenario.sweep
    tol = sec.wait_tolerance_min
    if tol is None:
        tol = default_wait_tolerance(scenario.calendar_model(), scenario.demand, scenario.baseline)
    progress = None if args.quiet else (lambda i, n: print(f"cell {i}/{n}", file=sys.stderr))
    report = run_sweep(grid, scenario.route_model(), scenario.calendar_model(), scenario.demand,
                       scenario.sim_config(), scenario.beb, workers=sec.workers, progress=progress)
    rec = recommend(report, tol)
    fast = scenario.beb.fast_charger
    delta = charger_cost_delta(8, 10, fast.unit_cost, fast.install_cost)
    rec_doc = rec.as_dict()
    rec_doc["seeds"] = list(grid.seeds)
    rec_doc["deviations"] = [
        f"deviation: cost of 8 -> 10 fast chargers computed {delta / 1e6:.3f} M vs reported "
        f"{REFERENCE_CHARGER_DELTA_8_10 / 1e6:.2f} M"
    ]
    out.write("sweep.csv", report.runs_to_csv())
    out.write("sweep_summary.csv", report.to_csv())
    out.json("recommendation.json", rec_doc)
    out.write("figure8.csv", write_figure(figure8_rows, report))
    out.write("figure9_10.csv", write_figure(figure9_10_rows, report))
    if rec.feasible:
        c = rec.cell
        _log(args, f"recommended: {c.bus_count} buses, {c.battery_kwh:g} kWh, {c.fast_chargers} fast chargers "
                   f"(mean wait {c.mean_wait:.4f} min <= {tol:.4f})")
    else:
        _log(args, f"no feasible configuration at wait tolerance {tol:.4f} min")
    for line in rec_doc["deviations"]:
        _log(args, line)
    return EXIT_OK


# -- demand -----------------------------------------------------------------

def cmd_demand(scenario: Scenario, seed: int, out: Output, args) -> int:
    cal = scenario.calendar_model()
    ps = generate_day_demand(scenario.route_model(), cal, scenario.demand, seed)
    out.write("passengers.csv", ps.to_csv())
    out.json("demand_summary.json", demand_summary(ps, cal))
    _log(args, f"{len(ps)} passengers (seed {seed})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="scenario JSON (default: bundled Lahore case)")
    common.add_argument("--seed", type=int, default=None, help="demand seed (default: metadata.seed)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a scenario value by dotted key, e.g. sim.fast_charger_count=12")
    common.add_argument("--quiet", action="store_true", help="suppress progress and report lines")

    p = argparse.ArgumentParser(prog="ebus-sim", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate one service day")
    t = sub.add_parser("tco", parents=[common], help="cost of ownership and breakeven")
    t.add_argument("--no-emissions", action="store_true", help="exclude emission cost from totals")
    sub.add_parser("sweep", parents=[common], help="run the sizing grid and recommend a cell")
    sub.add_parser("demand", parents=[common], help="write one day of synthetic passengers")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        scenario = load_scenario(args.config, args.overrides)
        seed = scenario.metadata.seed if args.seed is None else args.seed
        if seed < 0:
            raise ValidationError("--seed", "must be >= 0")
        if args.command == "sweep" and scenario.sweep is None:
            raise ValidationError("sweep", "scenario has no sweep section")
        out = Output(args.out)
        if args.command == "simulate":
            rc = cmd_simulate(scenario, seed, out, args)
            seeds = [seed]
        elif args.command == "tco":
            rc = cmd_tco(scenario, out, args)
            seeds = []
        elif args.command == "sweep":
            rc = cmd_sweep(scenario, out, args)
            seeds = list(scenario.sweep.seeds)
        else:
            rc = cmd_demand(scenario, seed, out, args)
            seeds = [seed]
        out.manifest(args.command, scenario, seeds, started)
        return rc
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, InfeasibleConfigError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
