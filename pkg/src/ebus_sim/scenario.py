"""JSON scenario files: strict loading, dotted overrides, hashing.

Every section maps onto a frozen dataclass.  Unknown keys are rejected at any
depth, so a misspelt parameter fails loudly instead of falling back to its
default.  An empty object ``{}`` yields the Lahore case study.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from . import __version__
from .demand import DemandParams
from .errors import ValidationError
from .route import BaselineDieselOps, RouteModel, ServiceCalendar, build_route, uniform_route
from .sim import BusSpec, ChargerBank, SimConfig
from .sweep import SweepGrid
from .tco import BebCostModel, DieselCostModel

_SIM = SimConfig()
_BUS = _SIM.bus_spec
_BANK = _SIM.charger_bank


@dataclass(frozen=True)
class Metadata:
    name: str = "lahore"
    description: str = "Lahore BRT corridor, 27 stations over 26.1 km"
    seed: int = 42

    def __post_init__(self):
        if self.seed < 0:
            raise ValidationError("metadata.seed", "must be >= 0")


@dataclass(frozen=True)
class RouteSection:
    station_count: int = 27
    length_km: float = 26.1
    # explicit [name, km] pairs; overrides station_count/length_km when given
    stations: tuple[tuple[str, float], ...] | None = None
    depot_station: int = 0

    def build(self) -> RouteModel:
        if self.stations is not None:
            return build_route(self.stations, self.depot_station)
        r = uniform_route(self.station_count, self.length_km)
        if not 0 <= self.depot_station < r.station_count:
            raise ValidationError("route.depot_station", "must index an existing station")
        return dataclasses.replace(r, depot_station=self.depot_station)


@dataclass(frozen=True)
class CalendarSection:
    open: str = "06:15"
    close: str = "22:15"
    peak_windows: tuple[tuple[str, str], ...] = (("07:00", "10:00"), ("12:00", "15:00"), ("17:00", "20:00"))

    def build(self) -> ServiceCalendar:
        return ServiceCalendar.from_hhmm(self.open, self.close, self.peak_windows)


@dataclass(frozen=True)
class SimSection:
    bus_count: int = _SIM.bus_count
    passenger_capacity: int = _BUS.passenger_capacity
    battery_kwh: float = _BUS.battery_capacity
    usable_fraction: float = _BUS.usable_fraction
    km_per_kwh: float = 1.88
    avg_speed_kmh: float = _BUS.avg_speed
    dwell_time_s: float = _BUS.dwell_time_s
    fast_charger_count: int = _BANK.fast_count
    fast_charger_kw: float = _BANK.fast_power
    slow_charger_count: int = _BANK.slow_count
    slow_charger_kw: float = _BANK.slow_power
    charge_start_threshold: float = _SIM.charge_start_threshold
    charge_stop_threshold: float = _SIM.charge_stop_threshold
    dispatch_headway_peak_s: float = _SIM.dispatch_headway_peak_s
    dispatch_headway_offpeak_s: float = _SIM.dispatch_headway_offpeak_s
    layover_min: float = _SIM.layover_min
    aux_load_kw: float = _SIM.aux_load_kw
    opportunistic_charging: bool = _SIM.opportunistic_charging
    dispatch_lowest_soc: bool = _SIM.dispatch_lowest_soc
    charge_efficiency: float = _SIM.charge_efficiency
    service_ramp_in: bool = _SIM.service_ramp_in

    def build(self) -> SimConfig:
        if not self.km_per_kwh > 0:
            raise ValidationError("sim.km_per_kwh", "must be > 0")
        return SimConfig(
            bus_count=self.bus_count,
            bus_spec=BusSpec(
                passenger_capacity=self.passenger_capacity,
                battery_capacity=self.battery_kwh,
                usable_fraction=self.usable_fraction,
                energy_per_km=1.0 / self.km_per_kwh,
                avg_speed=self.avg_speed_kmh,
                dwell_time_s=self.dwell_time_s,
            ),
            charger_bank=ChargerBank(
                fast_count=self.fast_charger_count,
                fast_power=self.fast_charger_kw,
                slow_count=self.slow_charger_count,
                slow_power=self.slow_charger_kw,
            ),
            charge_start_threshold=self.charge_start_threshold,
            charge_stop_threshold=self.charge_stop_threshold,
            dispatch_headway_peak_s=self.dispatch_headway_peak_s,
            dispatch_headway_offpeak_s=self.dispatch_headway_offpeak_s,
            layover_min=self.layover_min,
            aux_load_kw=self.aux_load_kw,
            opportunistic_charging=self.opportunistic_charging,
            dispatch_lowest_soc=self.dispatch_lowest_soc,
            charge_efficiency=self.charge_efficiency,
            service_ramp_in=self.service_ramp_in,
        )


@dataclass(frozen=True)
class SweepSection:
    bus_counts: tuple[int, ...] = (58, 64)
    battery_sizes_kwh: tuple[float, ...] = (350.0, 400.0)
    fast_charger_counts: tuple[int, ...] = (2, 4, 6, 8, 10, 12, 14)
    seeds: tuple[int, ...] = tuple(range(10))
    wait_tolerance_min: float | None = None  # None: incumbent blended half-headway + 10%
    workers: int = 1

    def build(self) -> SweepGrid:
        if self.workers < 1:
            raise ValidationError("sweep.workers", "must be >= 1")
        if self.wait_tolerance_min is not None and self.wait_tolerance_min < 0:
            raise ValidationError("sweep.wait_tolerance_min", "must be >= 0")
        return SweepGrid(self.bus_counts, self.battery_sizes_kwh, self.fast_charger_counts, self.seeds)


@dataclass(frozen=True)
class Scenario:
    metadata: Metadata = field(default_factory=Metadata)
    route: RouteSection = field(default_factory=RouteSection)
    calendar: CalendarSection = field(default_factory=CalendarSection)
    demand: DemandParams = field(default_factory=DemandParams)
    sim: SimSection = field(default_factory=SimSection)
    baseline: BaselineDieselOps = field(default_factory=BaselineDieselOps)
    diesel: DieselCostModel = field(default_factory=DieselCostModel)
    beb: BebCostModel = field(default_factory=BebCostModel)
    sweep: SweepSection | None = None

    def __post_init__(self):
        # cross-section checks run once everything has parsed
        self.route_model()
        self.calendar_model()
        self.sim_config()
        if self.sweep is not None:
            self.sweep.build()

    def route_model(self) -> RouteModel:
        return self.route.build()

    def calendar_model(self) -> ServiceCalendar:
        return self.calendar.build()

    def sim_config(self) -> SimConfig:
        return self.sim.build()

    def sweep_grid(self) -> SweepGrid:
        if self.sweep is None:
            raise ValidationError("sweep", "scenario has no sweep section")
        return self.sweep.build()

    def to_dict(self) -> dict:
        return _to_plain(self)

    def digest(self) -> str:
        """SHA-256 over every result-affecting parameter plus the tool version."""
        d = self.to_dict()
        d["metadata"] = {"seed": d["metadata"]["seed"]}
        blob = json.dumps({"scenario": d, "version": __version__}, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _strip_optional(tp):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1:
            return args[0], True
    return tp, False


def _coerce(tp, value, path: str):
    tp, optional = _strip_optional(tp)
    if value is None:
        if optional:
            return None
        raise ValidationError(path, "must not be null")
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ValidationError(path, f"expected an object, got {type(value).__name__}")
        return _build(tp, value, path)
    origin = typing.get_origin(tp)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ValidationError(path, f"expected a list, got {type(value).__name__}")
        args = typing.get_args(tp)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
        if len(args) != len(value):
            raise ValidationError(path, f"expected {len(args)} items, got {len(value)}")
        return tuple(_coerce(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if tp is bool:
        if not isinstance(value, bool):
            raise ValidationError(path, "expected true or false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ValidationError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ValidationError(path, f"expected a string, got {value!r}")
        return value
    return value


def _build(cls, data: dict, prefix: str):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            where = f"{prefix}.{key}" if prefix else key
            raise ValidationError(where, "unknown key")
    kwargs = {}
    for key, value in data.items():
        where = f"{prefix}.{key}" if prefix else key
        kwargs[key] = _coerce(hints[key], value, where)
    try:
        return cls(**kwargs)
    except ValidationError as exc:
        if prefix and not exc.field.startswith(prefix.split(".")[0]):
            raise ValidationError(f"{prefix}.{exc.field}", exc.constraint) from None
        raise


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(raw: dict, assignment: str) -> None:
    """Apply one ``a.b.c=value`` override to the raw scenario mapping in place."""
    if "=" not in assignment:
        raise ValidationError("--set", f"expected key=value, got {assignment!r}")
    key, text = assignment.split("=", 1)
    parts = [p for p in key.strip().split(".")]
    if not all(parts):
        raise ValidationError("--set", f"malformed key {key!r}")
    cls: Any = Scenario
    node = raw
    for depth, part in enumerate(parts):
        hints = typing.get_type_hints(cls)
        if part not in hints:
            raise ValidationError(".".join(parts[: depth + 1]), "unknown key")
        tp, _ = _strip_optional(hints[part])
        if depth == len(parts) - 1:
            node[part] = _parse_value(text)
            return
        if not dataclasses.is_dataclass(tp):
            raise ValidationError(".".join(parts[: depth + 1]), "is not a section")
        nxt = node.get(part)
        if nxt is None:
            nxt = node[part] = {}
        elif not isinstance(nxt, dict):
            raise ValidationError(".".join(parts[: depth + 1]), "is not an object")
        node, cls = nxt, tp


def parse_scenario_text(text: str, source: str = "<scenario>") -> dict:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(source, f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ValidationError(source, "top level must be an object")
    raw.pop("$schema", None)
    return raw


def scenario_from_dict(raw: dict) -> Scenario:
    return _build(Scenario, raw, "")


def bundled_scenario_path() -> Path:
    return Path(str(resources.files("ebus_sim") / "data" / "lahore.json"))


def load_scenario(path: str | Path | None = None, overrides: list[str] | tuple[str, ...] = ()) -> Scenario:
    src = Path(path) if path is not None else bundled_scenario_path()
    try:
        text = src.read_text(encoding="utf-8")
    except OSError as exc:
        raise FileNotFoundError(f"cannot read scenario {src}: {exc.strerror}") from None
    raw = parse_scenario_text(text, str(src))
    raw = copy.deepcopy(raw)
    for item in overrides:
        apply_override(raw, item)
    return scenario_from_dict(raw)
