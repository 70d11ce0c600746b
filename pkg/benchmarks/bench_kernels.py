"""Time the compiled and pure-Python closed-loop kernels on one scenario.

Usage: python3 benchmarks/bench_kernels.py [--horizon 20] [--repeat 3]
"""

import argparse
import time

import numpy as np

from twomass.controllers import canonical_hinf_controller
from twomass.plant import PlantParams
from twomass.sim import Scenario, get_kernel, simulate


def _time(sc, p, cs, kernel, repeat):
    best = np.inf
    res = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        res = simulate(sc, p, cs, kernel)
        best = min(best, time.perf_counter() - t0)
    return best, res


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=float, default=20.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    p = PlantParams()
    cs = canonical_hinf_controller()
    kernels = ["python"]
    try:
        get_kernel("cython")
        kernels.insert(0, "cython")
    except ImportError:
        print("compiled kernel not built; timing the fallback only")
    for ctrl, exp in (("fo", "tracking"), ("hinf", "disturbance")):
        sc = Scenario(controller=ctrl, experiment=exp, horizon=args.horizon)
        times = {}
        results = {}
        for k in kernels:
            times[k], results[k] = _time(sc, p, cs, k, args.repeat if k == "cython" else 1)
        n = results[kernels[0]].t.size
        line = f"{sc.label:26s} {n} steps"
        for k in kernels:
            line += f"  {k} {times[k]:.4f} s ({1e6 * times[k] / n:.2f} us/step)"
        if len(kernels) == 2:
            dy = np.max(np.abs(results["cython"].y - results["python"].y))
            line += f"  speedup {times['python'] / times['cython']:.0f}x  max|dy| {dy:.1e}"
        print(line)


if __name__ == "__main__":
    main()
