"""Seeded synthesis of a day of passenger arrivals.

Arrivals at each station form a Poisson process whose rate is piecewise
constant per minute (peak or off-peak).  Each minute at each station draws
from its own counter-based substream (Philox keyed by the seed, counter set
to the ``(minute, station)`` cell), so the output does not depend on the
order in which cells are generated.

Within a cell the passenger count is Poisson, the arrival second is uniform
on ``0..59``, the travel direction is a Bernoulli draw with probability
``(S_n - S_i - 1) / (S_n - 1)`` of heading up the corridor, and the
destination is uniform over the stations ahead.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .route import Period, RouteModel, ServiceCalendar, operating_minutes, service_period

UP = 0
DOWN = 1
DIRECTION_NAMES = ("Up", "Down")

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class DemandParams:
    lambda_peak: float = 10.0  # arrivals / station / minute, before scaling
    lambda_offpeak: float = 3.0
    target_daily_passengers: float | None = 95_000
    calibration_scale: float | None = None  # None -> derive from target

    def __post_init__(self):
        if self.lambda_offpeak < 0:
            raise ValidationError("demand.lambda_offpeak", "must be >= 0")
        if self.lambda_peak < self.lambda_offpeak:
            raise ValidationError("demand.lambda_peak", "must be >= lambda_offpeak")
        if self.target_daily_passengers is not None and self.target_daily_passengers < 0:
            raise ValidationError("demand.target_daily_passengers", "must be >= 0")
        if self.calibration_scale is not None and self.calibration_scale < 0:
            raise ValidationError("demand.calibration_scale", "must be >= 0")
        if self.calibration_scale is None and self.target_daily_passengers is None:
            raise ValidationError(
                "demand", "one of target_daily_passengers or calibration_scale is required"
            )


def substream(seed: int, minute: int, station: int) -> np.random.Generator:
    """Independent generator for one ``(minute, station)`` cell."""
    bitgen = np.random.Philox(key=[seed & _U64, 0], counter=[0, 0, minute, station])
    return np.random.Generator(bitgen)


def poisson_pmf(x: int, lam: float) -> float:
    if x < 0:
        return 0.0
    if lam == 0:
        return 1.0 if x == 0 else 0.0
    return math.exp(x * math.log(lam) - lam - math.lgamma(x + 1))


def poisson_sample(lam: float, rng: np.random.Generator) -> int:
    if not lam >= 0:
        raise ValidationError("lambda", f"must be >= 0, got {lam}")
    return int(rng.poisson(lam))


def direction_probability(station_index: int, station_count: int) -> float:
    """Probability that a passenger boarding at ``station_index`` heads up the line."""
    if station_count < 2:
        raise ValidationError("station_count", "must be >= 2")
    if not 0 <= station_index < station_count:
        raise ValidationError("station_index", f"{station_index} not in [0, {station_count})")
    return (station_count - station_index - 1) / (station_count - 1)


def sample_direction(p_up: float, rng: np.random.Generator) -> int:
    if not 0.0 <= p_up <= 1.0:
        raise ValidationError("p_up", "must lie in [0, 1]")
    return UP if rng.random() < p_up else DOWN


def _destination_from_uniform(origin, direction, station_count, u):
    # shared by the scalar sampler and the vectorised day generator
    if direction == UP:
        span = station_count - 1 - origin
        return origin + 1 + np.minimum((u * span).astype(np.int64), span - 1)
    span = origin
    return np.minimum((u * span).astype(np.int64), span - 1)


def sample_alighting(origin: int, direction: int, station_count: int, rng: np.random.Generator) -> int:
    if direction == UP and origin >= station_count - 1:
        raise ValidationError("origin", "no station ahead in the Up direction")
    if direction == DOWN and origin <= 0:
        raise ValidationError("origin", "no station ahead in the Down direction")
    u = np.array([rng.random()])
    return int(_destination_from_uniform(origin, direction, station_count, u)[0])


def calibrate_lambda(params: DemandParams, calendar: ServiceCalendar, station_count: int) -> float:
    """Scale that makes expected daily arrivals equal the target ridership."""
    _, peak, offpeak = operating_minutes(calendar)
    raw = station_count * (peak * params.lambda_peak + offpeak * params.lambda_offpeak)
    if raw <= 0:
        raise ValidationError("demand", "raw expected arrivals are zero; cannot calibrate")
    if params.target_daily_passengers is None:
        raise ValidationError("demand.target_daily_passengers", "required for calibration")
    return params.target_daily_passengers / raw


def effective_scale(params: DemandParams, calendar: ServiceCalendar, station_count: int) -> float:
    if params.calibration_scale is not None:
        return params.calibration_scale
    if params.target_daily_passengers == 0 or params.lambda_peak == 0:
        return 0.0  # no arrivals either way; nothing to calibrate
    return calibrate_lambda(params, calendar, station_count)


@dataclass(frozen=True, eq=False)
class PassengerSet:
    """Struct-of-arrays passenger table, ordered by (minute, station, second)."""

    arrival_s: np.ndarray  # int64 seconds since midnight
    origin: np.ndarray  # int64
    direction: np.ndarray  # int8, UP / DOWN
    destination: np.ndarray  # int64
    seed: int | None = None
    calibration_scale: float | None = None

    def __len__(self) -> int:
        return len(self.arrival_s)

    @property
    def ids(self) -> np.ndarray:
        return np.arange(len(self), dtype=np.int64)

    @property
    def arrival_minute(self) -> np.ndarray:
        return self.arrival_s / 60.0

    @classmethod
    def empty(cls, seed=None, calibration_scale=None) -> "PassengerSet":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z.copy(), np.zeros(0, dtype=np.int8), z.copy(), seed, calibration_scale)

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "arrival_minute", "origin", "direction", "destination"])
        for i in range(len(self)):
            w.writerow([
                i,
                f"{self.arrival_s[i] / 60.0:.4f}",
                int(self.origin[i]),
                DIRECTION_NAMES[self.direction[i]],
                int(self.destination[i]),
            ])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text

    @classmethod
    def from_csv(cls, path: str | Path) -> "PassengerSet":
        arr, org, dirs, dst = [], [], [], []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for n, row in enumerate(reader):
                if int(row["id"]) != n:
                    raise ValidationError("passengers.id", f"expected contiguous ids, row {n}")
                arr.append(round(float(row["arrival_minute"]) * 60))
                org.append(int(row["origin"]))
                dirs.append(DIRECTION_NAMES.index(row["direction"]))
                dst.append(int(row["destination"]))
        return cls(
            np.asarray(arr, dtype=np.int64),
            np.asarray(org, dtype=np.int64),
            np.asarray(dirs, dtype=np.int8),
            np.asarray(dst, dtype=np.int64),
        )

    def validate(self, station_count: int) -> None:
        if len(self) == 0:
            return
        o, d, dst = self.origin, self.direction, self.destination
        if o.min() < 0 or o.max() >= station_count or dst.min() < 0 or dst.max() >= station_count:
            raise ValidationError("passengers", "station index out of range for route")
        if np.any(dst == o):
            raise ValidationError("passengers", "destination equals origin")
        if np.any((dst > o) != (d == UP)):
            raise ValidationError("passengers", "direction inconsistent with destination")


def generate_day_demand(
    route: RouteModel, calendar: ServiceCalendar, params: DemandParams, seed: int
) -> PassengerSet:
    n_st = route.station_count
    scale = effective_scale(params, calendar, n_st)
    p_up = np.array([direction_probability(i, n_st) for i in range(n_st)])

    arrival, origin, direction, dest = [], [], [], []
    for minute in range(calendar.open_minute, calendar.close_minute):
        period = service_period(calendar, minute)
        lam = scale * (params.lambda_peak if period is Period.PEAK else params.lambda_offpeak)
        if lam == 0:
            continue
        for st in range(n_st):
            rng = substream(seed, minute, st)
            n = poisson_sample(lam, rng)
            if n == 0:
                continue
            secs = np.sort(rng.integers(0, 60, n))
            dirs = np.where(rng.random(n) < p_up[st], UP, DOWN).astype(np.int8)
            u = rng.random(n)
            dst = np.where(
                dirs == UP,
                _destination_from_uniform(st, UP, n_st, u) if st < n_st - 1 else -1,
                _destination_from_uniform(st, DOWN, n_st, u) if st > 0 else -1,
            )
            arrival.append(minute * 60 + secs)
            origin.append(np.full(n, st, dtype=np.int64))
            direction.append(dirs)
            dest.append(dst.astype(np.int64))

    if not arrival:
        return PassengerSet.empty(seed, scale)
    return PassengerSet(
        np.concatenate(arrival).astype(np.int64),
        np.concatenate(origin),
        np.concatenate(direction),
        np.concatenate(dest),
        seed,
        scale,
    )


def demand_summary(ps: PassengerSet, calendar: ServiceCalendar) -> dict:
    minutes = ps.arrival_s // 60
    peak = 0
    for start, end in calendar.peak_windows:
        peak += int(np.count_nonzero((minutes >= start) & (minutes < end)))
    return {
        "total_passengers": len(ps),
        "peak_passengers": peak,
        "offpeak_passengers": len(ps) - peak,
        "calibration_scale": ps.calibration_scale,
        "seed": ps.seed,
    }
