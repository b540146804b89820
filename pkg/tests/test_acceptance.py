"""End-to-end acceptance gate.

Each test prints one PASS/FAIL line for its criterion (visible with
`pytest -s` or on failure) in addition to asserting it.
"""

from __future__ import annotations

import subprocess
import sys
import time

import numpy as np
import pytest

import oracles
from i2lqr.dynamics import A_MAX, DELTA_MAX, ModelParams, rollout
from i2lqr.history import DistanceWeights, HistorySet, TrajectoryRecord, k_nearest
from i2lqr.ilqr import ILQRConfig, ILQRProblem, solve


def _report(name: str, ok: bool, detail: str):
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"{name}: {detail}"


class _LinearModel:
    """Linear dynamics x+ = A x + B u with unconstrained inputs."""

    input_bounds = (np.inf, np.inf)

    def __init__(self, A, B):
        self.A, self.B = np.asarray(A, float), np.asarray(B, float)
        self.params = ModelParams()  # unused by the python kernel

    def step(self, x, u):
        return self.A @ x + self.B @ u

    def rollout(self, x0, U):
        X = [np.asarray(x0, float)]
        for u in U:
            X.append(self.step(X[-1], u))
        return np.array(X)

    def linearize(self, x, u):
        return self.A.copy(), self.B.copy()

    def saturate(self, u):
        return np.asarray(u, float)


def test_criterion_1_lqr_exactness(rng):
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        N = int(rng.integers(1, 6))
        A = np.eye(4) + 0.1 * rng.standard_normal((4, 4))
        B = rng.standard_normal((4, 2))
        x0 = rng.standard_normal(4)
        z = rng.standard_normal(4)
        P = rng.uniform(0.5, 2.0, 4)
        R = rng.uniform(0.01, 0.1, 2)
        cfg = ILQRConfig(horizon=N, terminal_weight=tuple(P), input_weight=tuple(R),
                         convergence_tol=1e-12, reg_init=1e-12)
        sol = solve(ILQRProblem(x0, z, None, cfg, _LinearModel(A, B)))
        X_ref, _ = oracles.qp_solve([A] * N, [B] * N, P, R, x0, z)
        worst = max(worst, float(np.linalg.norm(sol.states - X_ref)))
    elapsed = time.perf_counter() - t0
    _report("criterion 1 (LQR exactness)", worst < 1e-6 and elapsed < 1.0,
            f"max trajectory error {worst:.2e}, runtime {elapsed:.2f}s")


def test_criterion_2_derivative_checks(rng):
    from i2lqr._kernels import PyKernel, pack_problem
    from i2lqr.dynamics import linearize, step
    from i2lqr.environment import ObstacleSpec, constraint_window
    from i2lqr.ilqr import BicycleModel

    p = ModelParams()
    h = 1e-6
    # dynamics Jacobians vs central differences
    worst_dyn = 0.0
    for _ in range(100):
        s = rng.uniform([-5, -5, 0.5, -1.0], [5, 5, 15, 1.0])
        u = rng.uniform([-1.5, -0.8], [1.5, 0.8])
        A, B = linearize(s, u, p)
        A_fd = np.column_stack([
            (step(s + h * e, u, p) - step(s - h * e, u, p)) / (2 * h)
            for e in np.eye(4)])
        B_fd = np.column_stack([
            (step(s, u + h * e, p) - step(s, u - h * e, p)) / (2 * h)
            for e in np.eye(2)])
        scale = max(1.0, np.abs(A).max(), np.abs(B).max())
        worst_dyn = max(worst_dyn,
                        np.abs(A - A_fd).max() / scale,
                        np.abs(B - B_fd).max() / scale)

    # cost gradients (terminal + input + obstacle/input barriers) vs FD
    ob = ObstacleSpec(shape="ellipse", center0=(2.0, 0.5), semi_axes=(3.0, 2.0))
    model = BicycleModel(p)
    cfg = ILQRConfig(horizon=3)
    window = constraint_window((ob,), 0, 0, cfg.horizon, p.dt)
    kern = PyKernel(pack_problem(np.zeros(4), np.ones(4), cfg, window,
                                 (A_MAX, DELTA_MAX)), model)
    worst_cost = 0.0
    for _ in range(100):
        X = rng.uniform(-6, 6, (4, 4))
        U = rng.uniform(-1.8, 1.8, (3, 2))
        lx, _, lu, _ = kern.cost_derivs(X, U)
        for k in range(1, 4):
            for i in range(4):
                Xp, Xm = X.copy(), X.copy()
                Xp[k, i] += h
                Xm[k, i] -= h
                fd = (kern.cost(Xp, U) - kern.cost(Xm, U)) / (2 * h)
                worst_cost = max(worst_cost,
                                 abs(lx[k, i] - fd) / max(1.0, abs(lx[k, i])))
        for k in range(3):
            for i in range(2):
                Up, Um = U.copy(), U.copy()
                Up[k, i] += h
                Um[k, i] -= h
                fd = (kern.cost(X, Up) - kern.cost(X, Um)) / (2 * h)
                worst_cost = max(worst_cost,
                                 abs(lu[k, i] - fd) / max(1.0, abs(lu[k, i])))
    _report("criterion 2 (derivative checks)",
            worst_dyn < 1e-5 and worst_cost < 1e-4,
            f"dynamics rel err {worst_dyn:.2e}, cost rel err {worst_cost:.2e}")


def _random_history(rng):
    n_records = int(rng.integers(1, 4))
    records = []
    for i in range(n_records):
        n = int(rng.integers(2, 68))
        states = rng.uniform([-50, -50, 0, -8], [250, 50, 25, 8], (n, 4))
        records.append(TrajectoryRecord(
            iteration_index=i, states=states,
            inputs=np.zeros((n - 1, 2)),
            cost_to_go=np.maximum(n - 1 - np.arange(n), 0)))
    return HistorySet(records=tuple(records), window=int(rng.integers(1, 4)))


def test_criterion_3_knn_oracle_equivalence(rng):
    mismatches = 0
    for _ in range(1000):
        h = _random_history(rng)
        total = h.visible_state_count()
        k = int(rng.integers(1, min(10, total) + 1))
        guide = rng.uniform([-60, -60, -5, -10], [260, 60, 30, 10])
        w = DistanceWeights(rng.uniform(0.05, 2.0, 4))
        got = sorted(c.source for c in k_nearest(h, guide, k, w))
        want = sorted(src for src, _, _ in oracles.knn_scan(h, guide, k, w))
        if got != want:
            mismatches += 1
    _report("criterion 3 (K-nearest oracle equivalence)", mismatches == 0,
            f"{mismatches}/1000 instances disagree")


def _nonincreasing_with_slack(steps, slack=1):
    return all(b <= a + slack for a, b in zip(steps, steps[1:]))


def test_criterion_4_no_obstacle_convergence(no_obstacle_run):
    r = no_obstacle_run
    steps = [it.steps for it in r.iterations[1:]]
    t_star = oracles.min_time_bangbang(201.5, 2, 1)
    final = r.iterations[-1]
    max_y = float(np.abs(final.states[:final.steps + 1, 1]).max())
    ok = (all(it.completed for it in r.iterations)
          and _nonincreasing_with_slack(steps)
          and abs(steps[-1] - t_star) <= 2
          and max_y < 1.0
          and r.wall_time < 60.0)
    _report("criterion 4 (no-obstacle convergence)", ok,
            f"steps {steps}, optimum {t_star}, max|y| {max_y:.3f} m, "
            f"wall {r.wall_time:.1f}s")


def test_criterion_5_static_ellipse(static_ellipse_run):
    from i2lqr.runner import AuditError, audit_trajectory
    r = static_ellipse_run
    audits_ok = True
    try:
        for it in r.iterations:
            audit_trajectory(it.states, it.inputs, r.scenario, it.index)
    except AuditError:
        audits_ok = False
    t_star = oracles.min_time_bangbang(201.5, 2, 1)
    final_steps = r.iterations[-1].steps
    ok = (all(it.completed for it in r.iterations)
          and audits_ok
          and abs(final_steps - t_star) <= 4)
    _report("criterion 5 (static ellipse)", ok,
            f"completed {[it.completed for it in r.iterations].count(True)}/11, "
            f"audits {'ok' if audits_ok else 'FAILED'}, "
          f"final {final_steps} vs optimum {t_star}")


def test_criterion_6_added_static_obstacle(added_static_circle_run):
    r = added_static_circle_run
    steps = [it.steps for it in r.iterations]
    pre_optimum = min(steps[1:6])
    ok = (all(it.completed for it in r.iterations)
          and _nonincreasing_with_slack(steps[1:6])
          and 22 <= steps[6] <= 35
          and all(abs(s - pre_optimum) <= 1 for s in steps[7:]))
    _report("criterion 6 (added static obstacle)", ok,
            f"iterations 1-5 {steps[1:6]}, iteration 6 {steps[6]}, "
            f"recovery {steps[7:]} vs pre-disturbance optimum {pre_optimum}")


def test_criterion_7_moving_obstacle(moving_circle_run):
    from i2lqr.environment import collision_free
    r = moving_circle_run
    steps = [it.steps for it in r.iterations]
    it6 = r.iterations[6]
    no_collision = collision_free(it6.states, r.scenario.obstacles, 6, 0,
                                  r.scenario.model.dt)
    pre_optimum = min(steps[1:6])
    ok = (it6.completed
          and no_collision
          and 25 <= steps[6] <= 45
          and all(abs(s - pre_optimum) <= 1 for s in steps[7:]))
    _report("criterion 7 (moving obstacle)", ok,
            f"iteration 6 {steps[6]} (collision-free: {no_collision}), "
            f"recovery {steps[7:]} vs optimum {pre_optimum}")


def test_criterion_8_determinism(tmp_path):
    logs = []
    for workers in (1, 4):
        out = tmp_path / f"w{workers}"
        proc = subprocess.run(
            [sys.executable, "-m", "i2lqr", "run", "--scenario", "no_obstacle",
             "--workers", str(workers), "--out", str(out)],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        logs.append((out / "no_obstacle.log").read_bytes())
    ok = logs[0] == logs[1]
    _report("criterion 8 (determinism)", ok,
            f"run logs for --workers 1 and 4 are "
            f"{'byte-identical' if ok else 'DIFFERENT'}")


def test_criterion_9_audit_completeness(all_scenario_runs):
    bad = []
    for name, r in all_scenario_runs.items():
        for it in r.iterations:
            replayed = rollout(it.states[0], it.inputs, r.scenario.model)
            if not np.array_equal(replayed, it.states):
                bad.append(f"{name}#{it.index}: replay mismatch")
            if (np.any(np.abs(it.inputs[:, 0]) > A_MAX)
                    or np.any(np.abs(it.inputs[:, 1]) > DELTA_MAX)):
                bad.append(f"{name}#{it.index}: input bound violated")
    _report("criterion 9 (audit completeness)", not bad,
            "all recorded trajectories replay exactly within exact input bounds"
            if not bad else "; ".join(bad))
