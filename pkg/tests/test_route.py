import pytest
from hypothesis import given
from hypothesis import strategies as st

from ebus_sim.errors import ValidationError
from ebus_sim.route import (
    BaselineDieselOps,
    Period,
    ServiceCalendar,
    build_route,
    format_hhmm,
    lahore_calendar,
    lahore_route,
    operating_minutes,
    parse_hhmm,
    service_period,
    uniform_route,
)


def test_lahore_route_geometry():
    r = lahore_route()
    assert r.station_count == 27
    assert r.total_length == pytest.approx(26.1)
    assert r.terminals == (0, 26)
    assert r.depot_station == 0
    gaps = [b - a for a, b in zip(r.distances, r.distances[1:])]
    assert all(g == pytest.approx(26.1 / 26) for g in gaps)


def test_minimal_route():
    r = build_route([("A", 0), ("B", 1)])
    assert r.total_length == 1
    assert r.terminals == (0, 1)


@pytest.mark.parametrize(
    "spec",
    [
        [("A", 0), ("B", 2), ("C", 1)],
        [("A", 0), ("B", 1), ("C", 1)],
        [("A", 0)],
        [("A", 0.5), ("B", 1)],
    ],
)
def test_build_route_rejects_bad_specs(spec):
    with pytest.raises(ValidationError):
        build_route(spec)


def test_depot_must_exist():
    with pytest.raises(ValidationError):
        build_route([("A", 0), ("B", 1)], depot_station=2)


@given(st.lists(st.floats(0.01, 10, allow_nan=False), min_size=1, max_size=30))
def test_build_route_is_pure(gaps):
    pos = [0.0]
    for g in gaps:
        pos.append(pos[-1] + g)
    spec = [(f"s{i}", d) for i, d in enumerate(pos)]
    a, b = build_route(spec), build_route(spec)
    assert a == b
    assert a.total_length == pos[-1]
    assert [s.index for s in a.stations] == list(range(len(pos)))


@pytest.mark.parametrize(
    "hhmm, expected",
    [("08:00", Period.PEAK), ("11:00", Period.OFFPEAK), ("23:00", Period.CLOSED),
     ("06:15", Period.OFFPEAK), ("06:14", Period.CLOSED), ("22:15", Period.CLOSED),
     ("07:00", Period.PEAK), ("10:00", Period.OFFPEAK), ("19:59", Period.PEAK)],
)
def test_service_period(hhmm, expected):
    assert service_period(lahore_calendar(), parse_hhmm(hhmm)) is expected


def test_operating_minutes_lahore():
    assert operating_minutes(lahore_calendar()) == (960, 540, 420)


def test_operating_minutes_edge_calendars():
    assert operating_minutes(ServiceCalendar(100, 200)) == (100, 0, 100)
    assert operating_minutes(ServiceCalendar(100, 200, ((100, 200),))) == (100, 100, 0)


@st.composite
def calendars(draw):
    open_m = draw(st.integers(0, 600))
    close_m = draw(st.integers(open_m + 1, 1440))
    cuts = sorted(draw(st.lists(st.integers(open_m, close_m), max_size=8, unique=True)))
    windows = tuple((a, b) for a, b in zip(cuts[0::2], cuts[1::2]) if a < b)
    return ServiceCalendar(open_m, close_m, windows)


@given(calendars())
def test_calendar_partition(cal):
    total, peak, off = operating_minutes(cal)
    assert peak + off == total
    counted = [service_period(cal, m) for m in range(cal.open_minute, cal.close_minute)]
    assert Period.CLOSED not in counted
    assert counted.count(Period.PEAK) == peak
    assert service_period(cal, cal.close_minute) is Period.CLOSED


@pytest.mark.parametrize(
    "args",
    [(600, 600), (0, 100, ((50, 40),)), (0, 100, ((10, 50), (40, 60))), (0, 100, ((90, 110),))],
)
def test_calendar_validation(args):
    with pytest.raises(ValidationError):
        ServiceCalendar(*args)


def test_hhmm_roundtrip_and_errors():
    assert parse_hhmm("22:15") == 1335
    assert format_hhmm(1335) == "22:15"
    for bad in ("7", "25:00", "07:60", "aa:bb"):
        with pytest.raises(ValidationError):
            parse_hhmm(bad)


def test_uniform_route_validation():
    with pytest.raises(ValidationError):
        uniform_route(1, 5.0)
    with pytest.raises(ValidationError):
        uniform_route(3, 0.0)


def test_baseline_defaults_and_validation():
    b = BaselineDieselOps()
    assert (b.fleet_in_circuit, b.headway_peak_s, b.headway_offpeak_s) == (58, 135.0, 180.0)
    assert (b.avg_speed, b.max_speed, b.bus_capacity) == (40.0, 55.0, 160)
    with pytest.raises(ValidationError):
        BaselineDieselOps(headway_peak_s=200.0)
    with pytest.raises(ValidationError):
        BaselineDieselOps(avg_speed=60.0)
    with pytest.raises(ValidationError):
        BaselineDieselOps(bus_capacity=0)
