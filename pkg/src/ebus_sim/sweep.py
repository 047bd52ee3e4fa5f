"""Exhaustive (bus count x battery x fast charger) grid and the cost/wait pick."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .demand import DemandParams, PassengerSet, generate_day_demand
from .errors import InfeasibleConfigError, ValidationError
from .route import BaselineDieselOps, RouteModel, ServiceCalendar, operating_minutes
from .sim import SimConfig, baseline_expected_wait, run_simulation
from .tco import BebCostModel

REFERENCE_CHARGER_DELTA_8_10 = 0.18e6  # reported; Table prices give ~1.397 M


@dataclass(frozen=True)
class SweepGrid:
    bus_counts: tuple[int, ...] = (58, 64)
    battery_sizes_kwh: tuple[float, ...] = (350.0, 400.0)
    fast_charger_counts: tuple[int, ...] = (2, 4, 6, 8, 10, 12, 14)
    seeds: tuple[int, ...] = tuple(range(10))

    def __post_init__(self):
        for name in ("bus_counts", "battery_sizes_kwh", "fast_charger_counts", "seeds"):
            vals = getattr(self, name)
            if len(vals) == 0:
                raise ValidationError(f"sweep.{name}", "must be non-empty")
            if name != "seeds" and any(not v > 0 for v in vals):
                raise ValidationError(f"sweep.{name}", "values must be positive")
            if name == "seeds" and any(v < 0 for v in vals):
                raise ValidationError("sweep.seeds", "seeds must be >= 0")
            # repeated seeds are allowed; repeated axis values would duplicate cells
            if name != "seeds" and len(set(vals)) != len(vals):
                raise ValidationError(f"sweep.{name}", "values must be distinct")

    def cells(self) -> list[tuple[int, float, int]]:
        return list(product(self.bus_counts, self.battery_sizes_kwh, self.fast_charger_counts))


@dataclass(frozen=True)
class CellResult:
    bus_count: int
    battery_kwh: float
    fast_chargers: int
    seeds: tuple[int, ...]
    waits: tuple[float, ...]
    strandings: int
    headway_violations: int
    unserved: int
    capital_usd: float
    capital_delta_usd: float = 0.0
    error: str | None = None

    @property
    def key(self) -> tuple[int, float, int]:
        return (self.bus_count, self.battery_kwh, self.fast_chargers)

    @property
    def mean_wait(self) -> float:
        return float(np.mean(self.waits)) if self.waits else math.inf

    @property
    def std_wait(self) -> float:
        return float(np.std(self.waits)) if self.waits else math.nan

    @property
    def failed(self) -> bool:
        return self.error is not None

    def as_dict(self) -> dict:
        return {
            "bus_count": self.bus_count,
            "battery_kwh": self.battery_kwh,
            "fast_chargers": self.fast_chargers,
            "mean_wait_min": self.mean_wait,
            "std_wait_min": self.std_wait,
            "capital_usd": self.capital_usd,
            "capital_delta_usd": self.capital_delta_usd,
            "strandings": self.strandings,
            "headway_violations": self.headway_violations,
            "unserved": self.unserved,
            "error": self.error,
        }


@dataclass(frozen=True)
class SweepReport:
    grid: SweepGrid
    cells: tuple[CellResult, ...]
    runs: tuple[dict, ...] = field(default=(), repr=False)  # one row per (cell, seed)

    def cell(self, bus_count: int, battery_kwh: float, fast_chargers: int) -> CellResult:
        for c in self.cells:
            if c.key == (bus_count, battery_kwh, fast_chargers):
                return c
        raise KeyError((bus_count, battery_kwh, fast_chargers))

    def to_csv(self, path: str | Path | None = None) -> str:
        cols = ["bus_count", "battery_kwh", "fast_chargers", "mean_wait_min", "std_wait_min",
                "capital_usd", "capital_delta_usd", "strandings", "headway_violations", "unserved", "error"]
        rows = [c.as_dict() for c in self.cells]
        return _write_rows(cols, rows, path)

    def runs_to_csv(self, path: str | Path | None = None) -> str:
        cols = ["bus_count", "battery_kwh", "fast_chargers", "seed", "avg_wait_min", "passengers_total",
                "passengers_served", "unserved_at_close", "total_distance_km", "total_energy_kwh",
                "traction_energy_kwh", "aux_energy_kwh", "peak_grid_kwh_per_minute",
                "stranding_count", "headway_violations", "error"]
        return _write_rows(cols, list(self.runs), path)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(round(v, 9)) if math.isfinite(v) else str(v)
    return str(v)


def _write_rows(cols: Sequence[str], rows: Sequence[dict], path) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in cols])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="")
    return text


def cell_capital_cost(bus_count: int, battery_kwh: float, fast_chargers: int, costs: BebCostModel) -> float:
    """Year-0 outlay of one grid cell at the cost model's unit prices."""
    fast = costs.fast_charger
    return (
        bus_count * (costs.bus_cost + battery_kwh * costs.battery_cost_per_kwh)
        + fast_chargers * (fast.unit_cost + fast.install_cost)
        + costs.slow_charger.capital
    )


def charger_cost_delta(n1: int, n2: int, unit_cost: float, install_cost: float) -> float:
    if n2 < n1:
        raise ValidationError("charger_cost_delta", "n2 must be >= n1")
    return (n2 - n1) * (unit_cost + install_cost)


def default_wait_tolerance(calendar: ServiceCalendar, demand: DemandParams,
                           baseline: BaselineDieselOps | None = None, margin: float = 0.10) -> float:
    """Blended half-headway of the incumbent service, plus ``margin``."""
    baseline = baseline or BaselineDieselOps()
    _, peak, off = operating_minutes(calendar)
    peak_load = peak * demand.lambda_peak
    total = peak_load + off * demand.lambda_offpeak
    share = peak_load / total if total > 0 else 0.0
    return baseline_expected_wait(baseline, share) * (1.0 + margin)


def _run_cell(route, calendar, base: SimConfig, demands: dict[int, PassengerSet], costs, key, seeds):
    nb, kwh, nf = key
    cfg = replace(
        base,
        bus_count=nb,
        bus_spec=replace(base.bus_spec, battery_capacity=kwh),
        charger_bank=replace(base.charger_bank, fast_count=nf),
    )
    waits, runs = [], []
    strand = viol = unserved = 0
    error = None
    for s in seeds:
        row = {"bus_count": nb, "battery_kwh": kwh, "fast_chargers": nf, "seed": s}
        try:
            res = run_simulation(route, calendar, cfg, demands[s], s)
        except InfeasibleConfigError as exc:
            error = str(exc)
            row["error"] = error
            runs.append(row)
            continue
        summ = res.summary()
        row.update({k: summ[k] for k in summ if k not in ("grid_start_minute", "end_minute", "stranding_warning")})
        runs.append(row)
        waits.append(res.avg_wait_min)
        strand += len(res.strandings)
        viol += sum(res.headway_violations)
        unserved += res.unserved_at_close
    cell = CellResult(nb, kwh, nf, tuple(seeds), tuple(waits), strand, viol, unserved,
                      cell_capital_cost(nb, kwh, nf, costs), error=error)
    return cell, runs


def run_sweep(
    grid: SweepGrid,
    route: RouteModel,
    calendar: ServiceCalendar,
    demand: DemandParams,
    base: SimConfig,
    costs: BebCostModel,
    workers: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> SweepReport:
    # demand depends only on the seed, so every cell shares one realisation per seed
    demands = {s: generate_day_demand(route, calendar, demand, s) for s in set(grid.seeds)}
    keys = grid.cells()
    jobs = lambda k: _run_cell(route, calendar, base, demands, costs, k, grid.seeds)  # noqa: E731
    done: list = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            for i, out in enumerate(ex.map(jobs, keys)):
                done.append(out)
                if progress:
                    progress(i + 1, len(keys))
    else:
        for i, k in enumerate(keys):
            done.append(jobs(k))
            if progress:
                progress(i + 1, len(keys))
    cheapest = min(c.capital_usd for c, _ in done)
    cells = tuple(replace(c, capital_delta_usd=c.capital_usd - cheapest) for c, _ in done)
    runs = tuple(r for _, rs in done for r in rs)
    return SweepReport(grid, cells, runs)


@dataclass(frozen=True)
class Recommendation:
    feasible: bool
    wait_tolerance_min: float
    cell: CellResult | None
    closest: tuple[CellResult, ...] = ()

    def as_dict(self) -> dict:
        out: dict = {"feasible": self.feasible, "wait_tolerance_min": self.wait_tolerance_min}
        if self.cell is not None:
            out.update({
                "bus_count": self.cell.bus_count,
                "battery_kwh": self.cell.battery_kwh,
                "fast_chargers": self.cell.fast_chargers,
                "mean_wait_min": self.cell.mean_wait,
                "capital_usd": self.cell.capital_usd,
            })
        else:
            out["reason"] = "no feasible configuration"
            out["closest"] = [c.as_dict() for c in self.closest]
        return out

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text


def _is_feasible(c: CellResult, tol: float) -> bool:
    return not c.failed and c.strandings == 0 and c.mean_wait <= tol


def recommend(report: SweepReport, wait_tolerance_min: float, n_closest: int = 3) -> Recommendation:
    """Cheapest cell meeting the wait tolerance with no strandings."""
    if not report.cells:
        raise ValidationError("report", "empty sweep report")
    ok = [c for c in report.cells if _is_feasible(c, wait_tolerance_min)]
    if ok:
        best = min(ok, key=lambda c: (c.capital_usd, c.fast_chargers, c.battery_kwh, c.bus_count))
        return Recommendation(True, wait_tolerance_min, best)
    runnable = [c for c in report.cells if not c.failed]
    closest = sorted(runnable, key=lambda c: (c.strandings > 0, c.mean_wait, c.capital_usd))[:n_closest]
    return Recommendation(False, wait_tolerance_min, None, tuple(closest))


def figure8_rows(report: SweepReport) -> tuple[list[str], list[dict]]:
    """Wait vs charger count, one series per bus count (per battery size)."""
    g = report.grid
    cols = ["battery_kwh", "fast_chargers"] + [f"wait_buses_{n}" for n in g.bus_counts]
    rows = []
    for kwh in g.battery_sizes_kwh:
        for nf in g.fast_charger_counts:
            r = {"battery_kwh": kwh, "fast_chargers": nf}
            for n in g.bus_counts:
                r[f"wait_buses_{n}"] = report.cell(n, kwh, nf).mean_wait
            rows.append(r)
    return cols, rows


def figure9_10_rows(report: SweepReport) -> tuple[list[str], list[dict]]:
    """Wait vs charger count, one series per battery size (per bus count)."""
    g = report.grid
    cols = ["bus_count", "fast_chargers"] + [f"wait_battery_{_kwh_label(k)}" for k in g.battery_sizes_kwh]
    rows = []
    for n in g.bus_counts:
        for nf in g.fast_charger_counts:
            r = {"bus_count": n, "fast_chargers": nf}
            for k in g.battery_sizes_kwh:
                r[f"wait_battery_{_kwh_label(k)}"] = report.cell(n, k, nf).mean_wait
            rows.append(r)
    return cols, rows


def _kwh_label(k: float) -> str:
    return str(int(k)) if float(k).is_integer() else str(k)


def write_figure(rows_fn, report: SweepReport, path: str | Path | None = None) -> str:
    cols, rows = rows_fn(report)
    return _write_rows(cols, rows, path)
