"""Time the compiled kernels against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py``. Each kernel is called with
identical inputs on both backends; the table reports the best of several
repeats and the speedup.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from collapse_lab import _pykernels

try:
    from collapse_lab import _ckernels
except ImportError:
    _ckernels = None


def cases():
    rng = np.random.default_rng(0)
    zs = [rng.normal(scale=3, size=10) for _ in range(200)]
    t_out = np.concatenate([[0.0], np.geomspace(1e-2, 1e6, 100)])
    a0, w3 = np.zeros(3), np.array([0.2, 0.3, 0.5])
    a, w, b = rng.normal(size=(3, 500))
    x = np.array([-2.0, -1.0, 1.0, 2.0])
    data = (x, np.sign(x), np.full(4, 0.25))

    def projections(mod):
        for z in zs:
            mod.project_lp_ball(z, 1.0, 1.5)

    return {
        "project_lp_ball (200 x k=10, p=1.5)": projections,
        "rk4_three_neuron (fixed dt, 1e5 steps)": lambda mod: mod.rk4_three_neuron(
            a0, w3, np.array([0.0, 1e3]), 1e-2, False),
        "rk4_three_neuron (stretched, T=1e6)": lambda mod: mod.rk4_three_neuron(a0, w3, t_out, 1e-2, True),
        "relu_risk_grad (m=500, 100 calls)": lambda mod: [mod.relu_risk_grad(a, w, b, *data) for _ in range(100)],
    }


def best_time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels not built; only the fallback is timed")
    print(f"{'kernel':<42}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}")
    for name, fn in cases().items():
        tp = best_time(lambda: fn(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:<42}{tp:>12.4f}{'-':>12}{'-':>10}")
            continue
        tc = best_time(lambda: fn(_ckernels), args.repeat)
        print(f"{name:<42}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
