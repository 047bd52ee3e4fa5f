import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebus_sim.demand import DemandParams, generate_day_demand
from ebus_sim.errors import InfeasibleConfigError
from ebus_sim.route import ServiceCalendar, build_route
from ebus_sim.sim import BusSpec, ChargerBank, SimConfig, World, finalize, run_simulation, step
from ebus_sim.sim import _kernel as K


@st.composite
def instances(draw):
    n_st = draw(st.integers(3, 8))
    gaps = draw(st.lists(st.floats(0.2, 4.0), min_size=n_st - 1, max_size=n_st - 1))
    dist = np.concatenate([[0.0], np.cumsum(gaps)])
    route = build_route([(f"s{i}", float(d)) for i, d in enumerate(dist)],
                        depot_station=draw(st.integers(0, n_st - 1)))
    open_m = draw(st.integers(300, 600))
    length = draw(st.integers(20, 150))
    peak_a = draw(st.integers(0, length))
    peak_b = draw(st.integers(peak_a, length))
    peaks = ((open_m + peak_a, open_m + peak_b),) if peak_b > peak_a else ()
    cal = ServiceCalendar(open_m, open_m + length, peaks)
    start = draw(st.floats(0.0, 0.6))
    stop = draw(st.floats(start + 0.05, 1.0))
    peak_h = draw(st.floats(30.0, 300.0))
    cfg = SimConfig(
        bus_count=draw(st.integers(1, 6)),
        bus_spec=BusSpec(
            passenger_capacity=draw(st.integers(1, 40)),
            battery_capacity=draw(st.floats(2.0, 200.0)),
            usable_fraction=draw(st.floats(0.2, 1.0)),
            energy_per_km=draw(st.floats(0.2, 3.0)),
            avg_speed=draw(st.floats(10.0, 60.0)),
            dwell_time_s=draw(st.floats(0.0, 90.0)),
        ),
        charger_bank=ChargerBank(
            fast_count=draw(st.integers(0, 4)),
            fast_power=draw(st.floats(20.0, 400.0)),
            slow_count=draw(st.integers(0, 6)),
            slow_power=draw(st.floats(20.0, 200.0)),
        ),
        charge_start_threshold=start,
        charge_stop_threshold=stop,
        dispatch_headway_peak_s=peak_h,
        dispatch_headway_offpeak_s=peak_h * draw(st.floats(1.0, 3.0)),
        layover_min=draw(st.sampled_from([0.0, 0.0, 1.5, 4.0])),
        aux_load_kw=draw(st.sampled_from([0.0, 0.0, 5.0, 30.0])),
        opportunistic_charging=draw(st.booleans()),
        dispatch_lowest_soc=draw(st.booleans()),
        charge_efficiency=draw(st.sampled_from([1.0, 0.9])),
        service_ramp_in=draw(st.booleans()),
    )
    lam_off = draw(st.floats(0.0, 2.0))
    params = DemandParams(lambda_peak=lam_off * draw(st.floats(1.0, 4.0)), lambda_offpeak=lam_off,
                          calibration_scale=1.0)
    demand = generate_day_demand(route, cal, params, draw(st.integers(0, 2**32)))
    return route, cal, cfg, demand


@settings(max_examples=1000)
@given(instances())
def test_random_instances_conserve_and_stay_bounded(inst):
    route, cal, cfg, demand = inst
    usable = cfg.bus_spec.usable_kwh
    cap = cfg.bus_spec.passenger_capacity
    w = World(route, cal, cfg, demand)
    last_odo = w.bf[:, K.BF_ODO].copy()
    limit = w.horizon_start + int(w.ip[K.IP_MAXH])
    while not w.finished and w.minute < limit:
        step(w)
        soc = w.bf[:, K.BF_SOC]
        assert np.all(soc >= 0.0)
        assert np.all(soc <= usable + 1e-9)
        assert np.all(w.bi[:, K.BI_NON] <= cap)
        odo = w.bf[:, K.BF_ODO]
        assert np.all(odo >= last_odo)
        last_odo = odo.copy()
    if not w.finished:
        # only an overnight depot backlog may outlast the horizon
        busy = w.bi[:, K.BI_PHASE]
        assert np.all(np.isin(busy, [K.PH_DONE, K.PH_STRANDED, K.PH_SLOW, K.PH_DEPOT_QUEUE]))
    res = finalize(w)

    # passengers: each is served or unserved; riders are only left aboard stranded buses
    assert res.passengers_served + res.unserved_at_close == len(demand)
    if not res.strandings:
        assert res.stranded_onboard == 0
    served = ~np.isnan(res.board_minute)
    assert np.all(res.board_minute[served] >= res.arrival_minute[served] - 1e-12)
    done = served & ~np.isnan(res.alight_minute)
    km = np.asarray(route.distances)
    ride = np.abs(km[demand.destination[done]] - km[demand.origin[done]]) / (cfg.bus_spec.avg_speed / 60.0)
    assert np.all(res.alight_minute[done] - res.board_minute[done] >= ride - 1e-9)
    assert res.capacity_breaches == 0

    # energy
    bal = res.initial_soc_kwh + res.per_bus_charged_kwh - res.per_bus_traction_kwh - res.per_bus_aux_kwh - res.final_soc_kwh
    assert np.max(np.abs(bal)) < 1e-9
    if cfg.aux_load_kw == 0.0:
        assert np.max(np.abs(res.initial_soc_kwh + res.per_bus_charged_kwh - res.per_bus_traction_kwh
                             - res.final_soc_kwh)) < 1e-9
    assert np.isclose(res.grid_load_per_minute.sum(), res.per_bus_grid_kwh.sum(), rtol=1e-12, atol=1e-9)
    assert np.isclose(res.per_bus_grid_kwh.sum() * cfg.charge_efficiency, res.per_bus_charged_kwh.sum(),
                      rtol=1e-12, atol=1e-9)
    assert res.total_distance_km == np.float64(res.per_bus_distance_km.sum())


@settings(max_examples=60)
@given(instances())
def test_stepping_matches_whole_day_run(inst):
    route, cal, cfg, demand = inst
    w = World(route, cal, cfg, demand)
    limit = w.horizon_start + int(w.ip[K.IP_MAXH])
    while not w.finished and w.minute < limit:
        step(w)
    if not w.finished:
        with pytest.raises(InfeasibleConfigError):
            run_simulation(route, cal, cfg, demand)
        return
    a = finalize(w)
    b = run_simulation(route, cal, cfg, demand)
    assert a.board_minute.tobytes() == b.board_minute.tobytes()
    assert a.final_soc_kwh.tobytes() == b.final_soc_kwh.tobytes()
    assert a.grid_load_per_minute.tobytes() == b.grid_load_per_minute.tobytes()
