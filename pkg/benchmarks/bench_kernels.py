#!/usr/bin/env python3
"""Benchmark the compiled trajectory-optimizer kernel against the numpy one.

Times the individual primitives (rollout, linearization, cost, derivatives,
Riccati backward pass, closed-loop forward pass) and a full solve on a
representative bicycle problem with one obstacle.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from i2lqr import _kernels
from i2lqr.dynamics import A_MAX, DELTA_MAX, ModelParams
from i2lqr.environment import ObstacleSpec, constraint_window
from i2lqr.ilqr import BicycleModel, ILQRConfig, ILQRProblem, solve


def build_problem(horizon: int):
    p = ModelParams()
    model = BicycleModel(p)
    ob = ObstacleSpec(shape="ellipse", center0=(30.0, -3.0), semi_axes=(8.0, 4.0))
    cfg = ILQRConfig(horizon=horizon)
    window = constraint_window((ob,), 0, 0, horizon, p.dt)
    x0 = np.array([0.0, 0.0, 8.0, 0.0])
    z = np.array([60.0, 0.0, 8.0, 0.0])
    problem = ILQRProblem(x0, z, window, cfg, model)
    return problem, model


def bench_primitives(problem, model, repeat: int):
    packed = problem.packed()
    py = _kernels.PyKernel(packed, model)
    kernels = {"python": py}
    if _kernels.compiled_available():
        compiled = _kernels.make_kernel(packed, model)
        if type(compiled).__name__ != "PyKernel":
            kernels["compiled"] = compiled

    rng = np.random.default_rng(0)
    U = rng.uniform([-1.0, -0.3], [1.0, 0.3], (packed.N, 2))
    X = py.rollout(U)
    A, B = py.linearize_traj(X, U)
    lx, lxx, lu, luu = py.cost_derivs(X, U)
    kff, K, *_ = py.backward(A, B, lx, lxx, lu, luu, 1e-6)

    ops = {
        "rollout": lambda k: k.rollout(U),
        "linearize_traj": lambda k: k.linearize_traj(X, U),
        "cost": lambda k: k.cost(X, U),
        "cost_derivs": lambda k: k.cost_derivs(X, U),
        "backward": lambda k: k.backward(A, B, lx, lxx, lu, luu, 1e-6),
        "forward": lambda k: k.forward(X, U, kff, K, 0.5),
    }

    results = {}
    for op_name, fn in ops.items():
        for backend, kern in kernels.items():
            fn(kern)  # warm-up
            t0 = time.perf_counter()
            for _ in range(repeat):
                fn(kern)
            results[(op_name, backend)] = (time.perf_counter() - t0) / repeat
    return results, list(kernels)


def bench_solve(problem, repeat: int):
    import os
    times = {}
    for backend in ("compiled", "python"):
        if backend == "compiled" and not _kernels.compiled_available():
            continue
        os.environ["I2LQR_BACKEND"] = backend
        solve(problem)  # warm-up
        t0 = time.perf_counter()
        for _ in range(repeat):
            solve(problem)
        times[backend] = (time.perf_counter() - t0) / repeat
    os.environ.pop("I2LQR_BACKEND", None)
    return times


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--horizon", type=int, default=10)
    args = ap.parse_args()

    problem, model = build_problem(args.horizon)
    results, backends = bench_primitives(problem, model, args.repeat)

    print(f"horizon {args.horizon}, {args.repeat} repetitions, "
          f"compiled extension {'available' if _kernels.compiled_available() else 'NOT BUILT'}")
    print(f"{'primitive':<16}" + "".join(f"{b:>14}" for b in backends) + f"{'speedup':>10}")
    for op in ("rollout", "linearize_traj", "cost", "cost_derivs", "backward", "forward"):
        row = f"{op:<16}"
        per = [results[(op, b)] for b in backends]
        for t in per:
            row += f"{t * 1e6:>12.1f}us"
        if len(per) == 2:
            row += f"{per[0] / per[1]:>9.1f}x"
        print(row)

    times = bench_solve(problem, max(1, args.repeat // 10))
    print()
    for backend, t in times.items():
        print(f"full solve ({backend:>8}): {t * 1e3:8.2f} ms")
    if len(times) == 2:
        print(f"full-solve speedup: {times['python'] / times['compiled']:.1f}x")


if __name__ == "__main__":
    main()
