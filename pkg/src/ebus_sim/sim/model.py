"""Fleet simulation: configuration, world state, policies and results."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ..demand import UP, PassengerSet
from ..errors import InfeasibleConfigError, ValidationError
from ..route import (
    BaselineDieselOps,
    Period,
    RouteModel,
    ServiceCalendar,
    service_period,
)
from . import _kernel as K


@dataclass(frozen=True)
class BusSpec:
    passenger_capacity: int = 160
    battery_capacity: float = 350.0  # kWh nameplate
    usable_fraction: float = 0.70
    energy_per_km: float = 1 / 1.88  # kWh/km
    avg_speed: float = 40.0  # km/h
    dwell_time_s: float = 30.0

    def __post_init__(self):
        for name in ("passenger_capacity", "battery_capacity", "energy_per_km", "avg_speed"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"sim.bus_spec.{name}", "must be > 0")
        if not 0 < self.usable_fraction <= 1:
            raise ValidationError("sim.bus_spec.usable_fraction", "must lie in (0, 1]")
        if self.dwell_time_s < 0:
            raise ValidationError("sim.bus_spec.dwell_time_s", "must be >= 0")

    @property
    def usable_kwh(self) -> float:
        return self.battery_capacity * self.usable_fraction


@dataclass(frozen=True)
class ChargerBank:
    fast_count: int = 10
    fast_power: float = 325.0  # kW
    slow_count: int = 58
    slow_power: float = 150.0

    def __post_init__(self):
        if self.fast_count < 0 or self.slow_count < 0:
            raise ValidationError("sim.chargers", "counts must be >= 0")
        if not (self.fast_power > 0 and self.slow_power > 0):
            raise ValidationError("sim.chargers", "powers must be > 0")

    @property
    def fast_per_terminal(self) -> tuple[int, int]:
        # odd counts put the extra unit at station 0
        return ((self.fast_count + 1) // 2, self.fast_count // 2)


@dataclass(frozen=True)
class SimConfig:
    bus_count: int = 64
    bus_spec: BusSpec = field(default_factory=BusSpec)
    charger_bank: ChargerBank = field(default_factory=ChargerBank)
    charge_start_threshold: float = 0.30  # fraction of usable capacity
    charge_stop_threshold: float = 0.95
    dispatch_headway_peak_s: float = 135.0
    dispatch_headway_offpeak_s: float = 180.0
    layover_min: float = 0.0
    aux_load_kw: float = 0.0
    opportunistic_charging: bool = False  # let idle pool buses top up on free fast chargers
    dispatch_lowest_soc: bool = False  # False dispatches the longest-waiting ready bus
    charge_efficiency: float = 1.0
    service_ramp_in: bool = True
    minute_step: int = 1

    def __post_init__(self):
        if self.bus_count < 1:
            raise ValidationError("sim.bus_count", "must be >= 1")
        if not 0 <= self.charge_start_threshold < self.charge_stop_threshold <= 1:
            raise ValidationError(
                "sim.charge_thresholds", "need 0 <= start < stop <= 1"
            )
        if not 0 < self.dispatch_headway_peak_s <= self.dispatch_headway_offpeak_s:
            raise ValidationError("sim.dispatch_headway", "need 0 < peak <= offpeak")
        if self.layover_min < 0 or self.aux_load_kw < 0:
            raise ValidationError("sim", "layover_min and aux_load_kw must be >= 0")
        if not 0 < self.charge_efficiency <= 1:
            raise ValidationError("sim.charge_efficiency", "must lie in (0, 1]")
        if self.minute_step != 1:
            raise ValidationError("sim.minute_step", "only a 1-minute step is supported")


@dataclass(frozen=True)
class StrandingEvent:
    bus_id: int
    minute: float
    position_km: float


@dataclass(eq=False)
class SimResult:
    avg_wait_min: float
    wait_distribution: tuple[np.ndarray, np.ndarray]  # (counts, bin edges in minutes)
    grid_start_minute: int
    grid_load_per_minute: np.ndarray  # kWh drawn in each minute
    per_bus_distance_km: np.ndarray
    per_bus_traction_kwh: np.ndarray
    per_bus_aux_kwh: np.ndarray
    per_bus_charged_kwh: np.ndarray
    per_bus_grid_kwh: np.ndarray
    initial_soc_kwh: np.ndarray
    final_soc_kwh: np.ndarray
    board_minute: np.ndarray  # per passenger id, nan if never boarded
    alight_minute: np.ndarray
    arrival_minute: np.ndarray
    passengers_served: int
    unserved_at_close: int
    stranded_onboard: int
    strandings: list[StrandingEvent]
    headway_violations: tuple[int, int]
    capacity_breaches: int
    end_minute: int

    @property
    def per_bus_energy_kwh(self) -> np.ndarray:
        return self.per_bus_traction_kwh + self.per_bus_aux_kwh

    @property
    def total_distance_km(self) -> float:
        return float(self.per_bus_distance_km.sum())

    @property
    def traction_energy_kwh(self) -> float:
        return float(self.per_bus_traction_kwh.sum())

    @property
    def aux_energy_kwh(self) -> float:
        return float(self.per_bus_aux_kwh.sum())

    @property
    def total_energy_kwh(self) -> float:
        """Grid-side energy over the whole horizon, overnight recharge included."""
        return float(self.grid_load_per_minute.sum())

    @property
    def waits(self) -> np.ndarray:
        served = ~np.isnan(self.board_minute)
        return self.board_minute[served] - self.arrival_minute[served]

    def summary(self) -> dict:
        return {
            "avg_wait_min": self.avg_wait_min,
            "passengers_total": int(len(self.board_minute)),
            "passengers_served": self.passengers_served,
            "unserved_at_close": self.unserved_at_close,
            "stranded_onboard": self.stranded_onboard,
            "total_distance_km": self.total_distance_km,
            "total_energy_kwh": self.total_energy_kwh,
            "traction_energy_kwh": self.traction_energy_kwh,
            "aux_energy_kwh": self.aux_energy_kwh,
            "peak_grid_kwh_per_minute": float(self.grid_load_per_minute.max(initial=0.0)),
            "mean_distance_per_bus_km": float(self.per_bus_distance_km.mean()),
            "stranding_count": len(self.strandings),
            "stranding_warning": bool(self.strandings),
            "headway_violations": int(sum(self.headway_violations)),
            "capacity_breaches": self.capacity_breaches,
            "grid_start_minute": self.grid_start_minute,
            "end_minute": self.end_minute,
        }


def _headway_table(calendar: ServiceCalendar, config: SimConfig, length: int) -> np.ndarray:
    out = np.empty(length)
    for m in range(length):
        peak = service_period(calendar, m) is Period.PEAK
        out[m] = (config.dispatch_headway_peak_s if peak else config.dispatch_headway_offpeak_s) / 60.0
    return out


class World:
    """Mutable simulation state; advance it with :func:`step`."""

    def __init__(self, route: RouteModel, calendar: ServiceCalendar, config: SimConfig, demand: PassengerSet):
        if len(demand) and config.bus_count < 1:
            raise InfeasibleConfigError("no buses to serve non-empty demand")
        demand.validate(route.station_count)
        self.route, self.calendar, self.config, self.demand = route, calendar, config, demand
        spec, bank = config.bus_spec, config.charger_bank
        nst, nbus = route.station_count, config.bus_count
        st_km = np.asarray(route.distances, dtype=np.float64)
        speed = spec.avg_speed / 60.0
        dwell = spec.dwell_time_s / 60.0

        one_way = route.total_length / speed + max(nst - 2, 0) * dwell
        service_start = calendar.open_minute - (math.floor(one_way) if config.service_ramp_in else 0)
        depot = route.depot_station
        pullout = max(abs(st_km[t] - st_km[depot]) for t in route.terminals) / speed
        hstart = math.floor(service_start - pullout)
        max_h = (calendar.close_minute - hstart) + 1440
        self.service_start = service_start

        fast0, fast1 = bank.fast_per_terminal
        self.fp = np.zeros(K.FP_N)
        self.fp[K.FP_SPEED] = speed
        self.fp[K.FP_DWELL] = dwell
        self.fp[K.FP_LAYOVER] = config.layover_min
        self.fp[K.FP_EKM] = spec.energy_per_km
        self.fp[K.FP_AUX] = config.aux_load_kw / 60.0
        self.fp[K.FP_USABLE] = spec.usable_kwh
        self.fp[K.FP_START] = config.charge_start_threshold * spec.usable_kwh
        self.fp[K.FP_STOP] = config.charge_stop_threshold * spec.usable_kwh
        self.fp[K.FP_FAST_RATE] = bank.fast_power / 60.0
        self.fp[K.FP_SLOW_RATE] = bank.slow_power / 60.0
        self.fp[K.FP_EFF] = config.charge_efficiency
        self.fp[K.FP_OPEN] = calendar.open_minute
        self.fp[K.FP_CLOSE] = calendar.close_minute
        self.fp[K.FP_SERVICE_START] = service_start
        self.fp[K.FP_HSTART] = hstart
        self.ip = np.zeros(K.IP_N, dtype=np.int64)
        self.ip[K.IP_NST] = nst
        self.ip[K.IP_NBUS] = nbus
        self.ip[K.IP_CAP] = spec.passenger_capacity
        self.ip[K.IP_DEPOT] = depot
        self.ip[K.IP_FAST0] = fast0
        self.ip[K.IP_FAST1] = fast1
        self.ip[K.IP_SLOW] = bank.slow_count
        self.ip[K.IP_MAXH] = max_h
        self.ip[K.IP_TOPUP] = int(config.opportunistic_charging)
        self.ip[K.IP_LOWSOC] = int(config.dispatch_lowest_soc)
        self.st_km = st_km
        self.headway = _headway_table(calendar, config, calendar.close_minute + 1440)

        # passengers queued per (origin, direction) in arrival order
        order = np.lexsort((np.arange(len(demand)), demand.arrival_s, demand.direction, demand.origin))
        self.order = order
        self.p_arr = demand.arrival_s[order] / 60.0
        self.p_dest = demand.destination[order].astype(np.int64)
        keys = demand.origin[order] * 2 + demand.direction[order]
        cells = np.arange(nst * 2)
        self.q_head = np.searchsorted(keys, cells, side="left").reshape(nst, 2).astype(np.int64)
        self.q_end = np.searchsorted(keys, cells, side="right").reshape(nst, 2).astype(np.int64)
        P = len(demand)
        self.p_board = np.full(P, np.nan)
        self.p_alight = np.full(P, np.nan)
        self.p_bus = np.full(P, -1, dtype=np.int64)

        self.bi = np.zeros((nbus, K.BI_NI), dtype=np.int64)
        self.bf = np.zeros((nbus, K.BF_NF))
        self.bi[:, K.BI_SLOT] = -1
        self.bf[:, K.BF_SOC] = spec.usable_kwh
        self.bf[:, K.BF_TNEXT] = K.INF
        self.bf[:, K.BF_SYNC] = hstart
        self.bf[:, K.BF_POS] = st_km[depot]
        for b in range(nbus):
            e = b % 2
            term = route.terminals[e]
            self.bi[b, K.BI_TERM] = e
            self.bi[b, K.BI_STATION] = term
            if term == depot:
                self.bi[b, K.BI_PHASE] = K.PH_READY
                self.bf[b, K.BF_READY] = hstart
            else:
                K._begin_move(self.bi, self.bf, self.fp, b, float(hstart), st_km[term], K.PH_DEADHEAD)
        self.initial_soc = self.bf[:, K.BF_SOC].copy()
        self.onboard = np.full((nbus, spec.passenger_capacity), -1, dtype=np.int64)
        self.term_last = np.full(2, K.NEG_INF)
        self.fast_slot = np.full((2, max(fast0, fast1, 1)), -1, dtype=np.int64)
        self.slow_slot = np.full(max(bank.slow_count, 1), -1, dtype=np.int64)
        self.ic = np.zeros(K.IC_N, dtype=np.int64)
        self.grid = np.zeros(max_h)
        self.strand_bus = np.full(nbus, -1, dtype=np.int64)
        self.strand_t = np.zeros(nbus)
        self.strand_pos = np.zeros(nbus)
        self.minute = hstart

    @property
    def horizon_start(self) -> int:
        return int(self.fp[K.FP_HSTART])

    @property
    def finished(self) -> bool:
        return bool(self.ic[K.IC_FINISHED])

    def _args(self):
        return (
            self.fp, self.ip, self.st_km, self.headway,
            self.p_arr, self.p_dest, self.q_end, self.q_head, self.p_board, self.p_alight, self.p_bus,
            self.bi, self.bf, self.onboard, self.term_last, self.fast_slot, self.slow_slot,
            self.ic, self.grid, self.strand_bus, self.strand_t, self.strand_pos,
        )

    # read-only views used by tests and policies
    def bus_states(self) -> list["BusState"]:
        out = []
        for b in range(self.config.bus_count):
            out.append(BusState(
                bus_id=b,
                phase=int(self.bi[b, K.BI_PHASE]),
                direction=int(self.bi[b, K.BI_DIR]),
                position=float(self.bf[b, K.BF_POS]),
                next_station=int(self.bi[b, K.BI_STATION]),
                terminal=int(self.bi[b, K.BI_TERM]),
                soc=float(self.bf[b, K.BF_SOC]),
                onboard=int(self.bi[b, K.BI_NON]),
                odometer_today=float(self.bf[b, K.BF_ODO]),
                energy_today=float(self.bf[b, K.BF_TRACTION] + self.bf[b, K.BF_AUX]),
            ))
        return out

    def waiting_count(self, station: int, direction: int, t: float) -> int:
        h, e = self.q_head[station, direction], self.q_end[station, direction]
        return int(np.searchsorted(self.p_arr[h:e], t, side="right"))


@dataclass(frozen=True)
class BusState:
    bus_id: int
    phase: int
    direction: int
    position: float
    next_station: int
    terminal: int
    soc: float
    onboard: int
    odometer_today: float
    energy_today: float

    @property
    def status(self) -> str:
        return {
            K.PH_READY: "Ready",
            K.PH_TRAVEL: "InService",
            K.PH_DWELL: "InService",
            K.PH_QUEUED: "QueuedForCharger",
            K.PH_FAST: "Charging",
            K.PH_SLOW: "Charging",
            K.PH_DEADHEAD: "Deadhead",
            K.PH_DEPOT_QUEUE: "Depot",
            K.PH_DONE: "Depot",
            K.PH_STRANDED: "Stranded",
        }[self.phase]


def step(world: World, minute: int | None = None) -> World:
    """Advance ``world`` through one minute (the next one if ``minute`` is None)."""
    if minute is None:
        minute = world.minute
    if minute != world.minute:
        raise ValidationError("minute", f"world is at minute {world.minute}, got {minute}")
    K.step_minute(minute, *world._args())
    world.minute = minute + 1
    return world


class ChargeAction(enum.Enum):
    START_FAST = "StartFast"
    QUEUE_FAST = "QueueFast"
    START_SLOW = "StartSlow"
    CONTINUE = "Continue"
    RELEASE = "Release"


def charging_policy(
    bus: BusState,
    config: SimConfig,
    minute: float,
    calendar: ServiceCalendar,
    free_fast: int,
    charging: bool = False,
) -> ChargeAction | None:
    """Decision for a bus standing at a terminal or the depot.

    Mirrors the rules applied inside the kernel: during service a bus below the
    start threshold claims a free fast charger or queues for one, and a
    charging bus is released at the stop threshold; outside service hours
    buses recharge to full on the depot's slow chargers.  Returns None when
    no charging action applies.

    With ``opportunistic_charging`` a ready bus below the stop threshold may
    also take a free fast charger; that top-up is preempted by any bus that
    needs the charger and ends when the bus is dispatched.
    """
    usable = config.bus_spec.usable_kwh
    operating = service_period(calendar, minute) is not Period.CLOSED
    if charging:
        target = config.charge_stop_threshold * usable if operating else usable
        return ChargeAction.RELEASE if bus.soc >= target - 1e-12 else ChargeAction.CONTINUE
    if not operating:
        return ChargeAction.START_SLOW if bus.soc < usable else None
    if bus.soc < config.charge_start_threshold * usable:
        return ChargeAction.START_FAST if free_fast > 0 else ChargeAction.QUEUE_FAST
    if config.opportunistic_charging and free_fast > 0 and bus.soc < config.charge_stop_threshold * usable:
        return ChargeAction.START_FAST
    return None


@dataclass(frozen=True)
class DispatchDecision:
    terminal: int
    bus_id: int
    minute: float
    late: bool  # departs after the headway target because no bus was ready


def dispatch_policy(world: World, minute: int) -> list[DispatchDecision]:
    """Dispatches the kernel would make in ``[minute, minute+1)`` given the current pools.

    A ready bus leaves a terminal once the headway for the current period has
    elapsed since the previous departure there.
    """
    out = []
    for e in range(2):
        cand, b = K._dispatch_candidate(
            world.bi, world.bf, world.fp, world.ip, world.headway, world.term_last, world.ic, e
        )
        if b >= 0 and cand < minute + 1:
            last = world.term_last[e]
            late = False
            if last > K.NEG_INF:
                h = world.headway[min(max(int(math.floor(last)), 0), len(world.headway) - 1)]
                late = cand > last + h + K.EPS
            out.append(DispatchDecision(e, int(b), float(cand), bool(late)))
    return out


def finalize(world: World) -> SimResult:
    ic = world.ic
    last = int(ic[K.IC_LAST_MINUTE])
    hstart = world.horizon_start
    grid = world.grid[: last - hstart + 1].copy()
    P = len(world.demand)
    inv = np.empty(P, dtype=np.int64)
    inv[world.order] = np.arange(P)
    board = world.p_board[inv]
    alight = world.p_alight[inv]
    arrival = world.demand.arrival_s / 60.0
    served = ~np.isnan(board)
    waits = board[served] - arrival[served]
    avg_wait = float(waits.mean()) if waits.size else 0.0
    top = max(1.0, math.ceil(waits.max())) if waits.size else 1.0
    hist = np.histogram(waits, bins=np.arange(0.0, top + 1.0, 1.0))
    n_strand = int(ic[K.IC_NSTRAND])
    strandings = [
        StrandingEvent(int(world.strand_bus[k]), float(world.strand_t[k]), float(world.strand_pos[k]))
        for k in range(n_strand)
    ]
    return SimResult(
        avg_wait_min=avg_wait,
        wait_distribution=hist,
        grid_start_minute=hstart,
        grid_load_per_minute=grid,
        per_bus_distance_km=world.bf[:, K.BF_ODO].copy(),
        per_bus_traction_kwh=world.bf[:, K.BF_TRACTION].copy(),
        per_bus_aux_kwh=world.bf[:, K.BF_AUX].copy(),
        per_bus_charged_kwh=world.bf[:, K.BF_CHARGED].copy(),
        per_bus_grid_kwh=world.bf[:, K.BF_GRID].copy(),
        initial_soc_kwh=world.initial_soc.copy(),
        final_soc_kwh=world.bf[:, K.BF_SOC].copy(),
        board_minute=board,
        alight_minute=alight,
        arrival_minute=arrival,
        passengers_served=int(served.sum()),
        unserved_at_close=int(P - served.sum()),
        stranded_onboard=int(np.count_nonzero(served & np.isnan(alight))),
        strandings=strandings,
        headway_violations=(int(ic[K.IC_VIOL0]), int(ic[K.IC_VIOL1])),
        capacity_breaches=int(ic[K.IC_CAP_BREACH]),
        end_minute=last + 1,
    )


def run_simulation(
    route: RouteModel,
    calendar: ServiceCalendar,
    config: SimConfig,
    demand: PassengerSet,
    seed: int | None = None,
) -> SimResult:
    """Simulate one service day.

    The fleet model is deterministic given its inputs; ``seed`` only
    identifies the demand realisation and is accepted for interface symmetry.
    """
    world = World(route, calendar, config, demand)
    K.run_day(*world._args())
    if not world.finished:
        raise InfeasibleConfigError("simulation did not settle within the horizon")
    return finalize(world)


def grid_load_profile(result: SimResult) -> np.ndarray:
    return result.grid_load_per_minute


def baseline_expected_wait(baseline: BaselineDieselOps, peak_share: float) -> float:
    """Half-headway wait in minutes, blended by the share of peak-period riders."""
    peak = baseline.headway_peak_s / 120.0
    off = baseline.headway_offpeak_s / 120.0
    return peak_share * peak + (1.0 - peak_share) * off


def fleet_comparison(result: SimResult, baseline: BaselineDieselOps, peak_share: float) -> dict:
    base_wait = baseline_expected_wait(baseline, peak_share)
    base_km = baseline.fleet_in_circuit * baseline.avg_daily_distance_per_bus
    return {
        "beb_avg_wait_min": result.avg_wait_min,
        "baseline_wait_min": base_wait,
        "wait_delta_min": result.avg_wait_min - base_wait,
        "wait_delta_pct": 100.0 * (result.avg_wait_min - base_wait) / base_wait,
        "beb_total_distance_km": result.total_distance_km,
        "baseline_total_distance_km": base_km,
        "distance_delta_km": result.total_distance_km - base_km,
        "passengers_served": result.passengers_served,
        "unserved_at_close": result.unserved_at_close,
    }
