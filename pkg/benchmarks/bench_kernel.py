"""Time one Lahore service day under the numba kernels and the Python fallback.

    python3 benchmarks/bench_kernel.py [--repeat N] [--set KEY=VALUE ...]

Each backend runs in its own interpreter because the switch is read at import.
The first numba call (JIT compile or cache load) is timed separately.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import textwrap

WORKER = textwrap.dedent("""
    import json, statistics, sys, time
    from ebus_sim._accel import backend
    from ebus_sim.scenario import load_scenario
    from ebus_sim.demand import generate_day_demand
    from ebus_sim.sim import run_simulation

    repeat = int(sys.argv[1])
    sc = load_scenario(None, sys.argv[2:])
    route, cal, cfg = sc.route_model(), sc.calendar_model(), sc.sim_config()
    demand = generate_day_demand(route, cal, sc.demand, 42)
    t0 = time.perf_counter()
    res = run_simulation(route, cal, cfg, demand, 42)
    first = time.perf_counter() - t0
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        run_simulation(route, cal, cfg, demand, 42)
        times.append(time.perf_counter() - t0)
    print(json.dumps({"backend": backend(), "first_s": first, "median_s": statistics.median(times),
                      "min_s": min(times), "passengers": len(demand), "avg_wait": res.avg_wait_min}))
""")


def run(disable: bool, repeat: int, overrides: list[str]) -> dict:
    env = dict(os.environ)
    env.pop("EBUS_SIM_DISABLE_NUMBA", None)
    if disable:
        env["EBUS_SIM_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", WORKER, str(repeat), *overrides],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    args = p.parse_args()
    fast = run(False, args.repeat, args.overrides)
    slow = run(True, args.repeat, args.overrides)
    print(f"{'backend':<8} {'first (s)':>10} {'median (s)':>11} {'min (s)':>9}")
    for r in (fast, slow):
        print(f"{r['backend']:<8} {r['first_s']:>10.3f} {r['median_s']:>11.3f} {r['min_s']:>9.3f}")
    if fast["avg_wait"] != slow["avg_wait"]:
        print("warning: backends disagree on mean wait", file=sys.stderr)
        return 1
    if fast["backend"] == "numba":
        print(f"speedup: {slow['median_s'] / fast['median_s']:.1f}x "
              f"({fast['passengers']} passengers, mean wait {fast['avg_wait']:.5f} min)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
