"""Time the compiled and pure-Python within-day kernels on the same days.

    python benchmarks/bench_kernel.py [--scenario parallel|single|sioux] [--days N]
"""

import argparse
import time

import numpy as np

from tollrl import _kernel_py
from tollrl.day_to_day import init_state
from tollrl.harness.scenarios import get_scenario

try:
    from tollrl import _kernel
except ImportError:
    _kernel = None


def time_backend(mod, net, departures, tolls, repeat):
    ptr, rows, seg = net.route_layout
    args = (departures, tolls, net.capacities, ptr, rows, seg, net.horizon)
    mod.propagate(*args)
    t0 = time.perf_counter()
    for _ in range(repeat):
        out = mod.propagate(*args)
    return (time.perf_counter() - t0) / repeat, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenario", default="parallel")
    ap.add_argument("--days", type=int, default=20)
    args = ap.parse_args()
    net = get_scenario(args.scenario)
    dep = init_state(net).departures
    rng = np.random.default_rng(0)
    tolls = rng.uniform(0, 2, size=(net.n_bottlenecks, net.horizon))
    py_t, py_out = time_backend(_kernel_py, net, dep, tolls, args.days)
    print(f"{args.scenario}: {net.n_routes} routes, {net.n_bottlenecks} bottlenecks, "
          f"T={net.horizon}")
    print(f"  python   {py_t * 1e3:9.3f} ms/day")
    if _kernel is None:
        print("  compiled extension not built")
        return
    c_t, c_out = time_backend(_kernel, net, dep, tolls, args.days)
    same = all(np.array_equal(a, b) for a, b in zip(py_out, c_out))
    print(f"  compiled {c_t * 1e3:9.3f} ms/day   speed-up x{py_t / c_t:.1f}   identical: {same}")


if __name__ == "__main__":
    main()
