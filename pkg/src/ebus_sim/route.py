"""Corridor geometry, service calendar and diesel reference operations."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

from .errors import ValidationError


class Period(enum.Enum):
    PEAK = "Peak"
    OFFPEAK = "OffPeak"
    CLOSED = "Closed"


def parse_hhmm(text: str) -> int:
    """Convert ``"HH:MM"`` to minutes since midnight."""
    try:
        hh, mm = text.split(":")
        hours, minutes = int(hh), int(mm)
    except (AttributeError, ValueError):
        raise ValidationError("time", f"expected 'HH:MM', got {text!r}") from None
    if not (0 <= hours <= 24 and 0 <= minutes < 60) or hours * 60 + minutes > 1440:
        raise ValidationError("time", f"out of range: {text!r}")
    return hours * 60 + minutes


def format_hhmm(minute: int) -> str:
    return f"{minute // 60:02d}:{minute % 60:02d}"


@dataclass(frozen=True)
class Station:
    index: int
    name: str
    distance_from_origin: float  # km


@dataclass(frozen=True)
class RouteModel:
    stations: tuple[Station, ...]
    depot_station: int = 0

    @property
    def station_count(self) -> int:
        return len(self.stations)

    @property
    def total_length(self) -> float:
        return self.stations[-1].distance_from_origin

    @property
    def terminals(self) -> tuple[int, int]:
        return (0, len(self.stations) - 1)

    @property
    def distances(self) -> list[float]:
        return [s.distance_from_origin for s in self.stations]


def build_route(
    station_spec: Sequence[tuple[str, float]], depot_station: int = 0
) -> RouteModel:
    """Build a linear corridor from ``(name, km from origin)`` pairs."""
    if len(station_spec) < 2:
        raise ValidationError("route.stations", "at least 2 stations required")
    stations = []
    prev = None
    for i, (name, dist) in enumerate(station_spec):
        dist = float(dist)
        if i == 0 and dist != 0.0:
            raise ValidationError("route.stations", "first station must be at 0 km")
        if prev is not None and not dist > prev:
            raise ValidationError(
                "route.stations",
                f"distances must be strictly increasing (station {i}: {dist} <= {prev})",
            )
        stations.append(Station(i, str(name), dist))
        prev = dist
    if not 0 <= depot_station < len(stations):
        raise ValidationError("route.depot_station", "must index an existing station")
    return RouteModel(tuple(stations), depot_station)


def uniform_route(station_count: int, total_length_km: float, prefix: str = "S") -> RouteModel:
    """Evenly spaced corridor; the default when per-station distances are unknown."""
    if station_count < 2:
        raise ValidationError("route.station_count", "at least 2 stations required")
    if total_length_km <= 0:
        raise ValidationError("route.total_length_km", "must be > 0")
    step = total_length_km / (station_count - 1)
    spec = [(f"{prefix}{i:02d}", i * step) for i in range(station_count - 1)]
    spec.append((f"{prefix}{station_count - 1:02d}", total_length_km))
    return build_route(spec)


@dataclass(frozen=True)
class ServiceCalendar:
    open_minute: int
    close_minute: int
    peak_windows: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.open_minute < self.close_minute:
            raise ValidationError("calendar", "open must be before close")
        last_end = self.open_minute
        for start, end in self.peak_windows:
            if not start < end:
                raise ValidationError("calendar.peak_windows", f"empty window ({start}, {end})")
            if start < last_end:
                raise ValidationError(
                    "calendar.peak_windows", "windows must be ordered, disjoint and after open"
                )
            if end > self.close_minute:
                raise ValidationError("calendar.peak_windows", "window extends past close")
            last_end = end

    @classmethod
    def from_hhmm(cls, open_at: str, close_at: str, peaks: Sequence[tuple[str, str]] = ()):
        return cls(
            parse_hhmm(open_at),
            parse_hhmm(close_at),
            tuple((parse_hhmm(a), parse_hhmm(b)) for a, b in peaks),
        )


def service_period(calendar: ServiceCalendar, minute: float) -> Period:
    if not calendar.open_minute <= minute < calendar.close_minute:
        return Period.CLOSED
    for start, end in calendar.peak_windows:
        if start <= minute < end:
            return Period.PEAK
    return Period.OFFPEAK


def operating_minutes(calendar: ServiceCalendar) -> tuple[int, int, int]:
    """Return ``(total, peak, offpeak)`` operating minute counts."""
    total = calendar.close_minute - calendar.open_minute
    peak = sum(end - start for start, end in calendar.peak_windows)
    return total, peak, total - peak


@dataclass(frozen=True)
class BaselineDieselOps:
    """Reference figures of the incumbent diesel operation."""

    fleet_in_circuit: int = 58
    headway_peak_s: float = 135.0
    headway_offpeak_s: float = 180.0
    avg_speed: float = 40.0  # km/h
    max_speed: float = 55.0
    bus_capacity: int = 160
    avg_daily_distance_per_bus: float = 313.2

    def __post_init__(self):
        if not 0 < self.headway_peak_s <= self.headway_offpeak_s:
            raise ValidationError("baseline", "need 0 < headway_peak_s <= headway_offpeak_s")
        if not 0 < self.avg_speed <= self.max_speed:
            raise ValidationError("baseline", "need 0 < avg_speed <= max_speed")
        if self.bus_capacity <= 0:
            raise ValidationError("baseline.bus_capacity", "must be > 0")
        if self.fleet_in_circuit <= 0:
            raise ValidationError("baseline.fleet_in_circuit", "must be > 0")


LAHORE_STATION_COUNT = 27
LAHORE_LENGTH_KM = 26.1


def lahore_route() -> RouteModel:
    return uniform_route(LAHORE_STATION_COUNT, LAHORE_LENGTH_KM)


def lahore_calendar() -> ServiceCalendar:
    return ServiceCalendar.from_hhmm(
        "06:15", "22:15", [("07:00", "10:00"), ("12:00", "15:00"), ("17:00", "20:00")]
    )
