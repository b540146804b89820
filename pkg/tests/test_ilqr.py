"""Trajectory optimizer: exactness on LQ problems, constraint handling,
warm starts, and the symmetry-breaking restarts."""

import numpy as np
import pytest

import oracles
from i2lqr.dynamics import A_MAX, DELTA_MAX, ModelParams
from i2lqr.environment import ObstacleSpec, constraint_window
from i2lqr.ilqr import (BicycleModel, ILQRConfig, ILQRProblem, _penetrates,
                        solve, total_cost)
from test_acceptance import _LinearModel

P = ModelParams()


def _lq_problem(rng, N):
    A = np.eye(4) + 0.1 * rng.standard_normal((4, 4))
    B = rng.standard_normal((4, 2))
    cfg = ILQRConfig(horizon=N, terminal_weight=(1.0, 2.0, 0.5, 1.0),
                     input_weight=(0.05, 0.05),
                     convergence_tol=1e-12, reg_init=1e-12)
    x0 = rng.standard_normal(4)
    z = rng.standard_normal(4)
    return ILQRProblem(x0, z, None, cfg, _LinearModel(A, B)), A, B


def test_lq_matches_stacked_qp(rng):
    for _ in range(10):
        prob, A, B = _lq_problem(rng, 4)
        sol = solve(prob)
        X_ref, U_ref = oracles.qp_solve([A] * 4, [B] * 4,
                                        prob.config.terminal_weight,
                                        prob.config.input_weight,
                                        prob.initial_state, prob.target)
        assert np.linalg.norm(sol.states - X_ref) < 1e-6
        assert sol.converged


def test_one_step_closed_form():
    # N=1, motion only in v: u* = P z_v B / (P B^2 + R) for x0 = 0
    A = np.eye(4)
    B = np.zeros((4, 2))
    B[2, 0] = 1.0
    cfg = ILQRConfig(horizon=1, terminal_weight=(0, 0, 3.0, 0),
                     input_weight=(0.5, 0.5),
                     convergence_tol=1e-12, reg_init=1e-12)
    z = np.array([0.0, 0.0, 2.0, 0.0])
    sol = solve(ILQRProblem(np.zeros(4), z, None, cfg, _LinearModel(A, B)))
    u_star = 3.0 * 2.0 / (3.0 + 0.5)
    assert sol.inputs[0, 0] == pytest.approx(u_star, abs=1e-8)


def test_zero_terminal_weight_keeps_zero_inputs():
    cfg = ILQRConfig(horizon=4, terminal_weight=(0, 0, 0, 0),
                     input_weight=(0.1, 0.1))
    sol = solve(ILQRProblem(np.zeros(4), np.ones(4), None, cfg,
                            BicycleModel(P)))
    assert np.allclose(sol.inputs, 0.0)


def test_already_at_target_converges_cheaply():
    cfg = ILQRConfig(horizon=3)
    x0 = np.array([1.0, 2.0, 0.0, 0.3])
    sol = solve(ILQRProblem(x0, x0, None, cfg, BicycleModel(P)))
    assert sol.converged
    assert np.abs(sol.inputs).max() < 1e-3


def test_inputs_always_within_bounds():
    # huge terminal pull: saturation must still hold exactly
    cfg = ILQRConfig(horizon=5, terminal_weight=(100.0, 100.0, 100.0, 100.0))
    sol = solve(ILQRProblem(np.zeros(4), np.array([500.0, 0, 0, 0]), None,
                            cfg, BicycleModel(P)))
    assert np.all(np.abs(sol.inputs[:, 0]) <= A_MAX)
    assert np.all(np.abs(sol.inputs[:, 1]) <= DELTA_MAX)


def test_warm_start_is_saturated_and_used():
    cfg = ILQRConfig(horizon=3, max_iterations=1)
    u_init = np.array([[5.0, 0.0]] * 3)  # beyond the acceleration bound
    sol = solve(ILQRProblem(np.zeros(4), np.array([9.0, 0, 0, 0]), None,
                            cfg, BicycleModel(P), u_init=u_init))
    assert np.all(np.abs(sol.inputs[:, 0]) <= A_MAX)


def test_total_cost_matches_manual_unconstrained():
    cfg = ILQRConfig(horizon=2)
    model = BicycleModel(P)
    prob = ILQRProblem(np.zeros(4), np.array([1.0, 0, 0, 0]), None, cfg, model)
    U = np.array([[1.0, 0.0], [0.5, 0.0]])
    X = model.rollout(np.zeros(4), U)
    e = X[-1] - prob.target
    manual = float(e @ (np.array(cfg.terminal_weight) * e))
    manual += sum(float(u @ (np.array(cfg.input_weight) * u)) for u in U)
    # the input barrier is active (finite bounds) but tiny far from them
    got = total_cost(X, U, prob)
    assert got == pytest.approx(manual, abs=1e-2)
    assert got > manual  # barrier floor is strictly positive


def _dead_center_problem():
    """Obstacle exactly on the straight line to the target: the barrier's
    lateral gradient vanishes on the axis, so only a symmetry-breaking
    restart can route around it."""
    ob = ObstacleSpec(shape="circle", center0=(18.0, 0.0), semi_axes=(5.0, 5.0),
                      safety_margin=1.0)
    cfg = ILQRConfig(horizon=6, barrier_q1=10.0)
    window = constraint_window((ob,), 0, 0, cfg.horizon, P.dt)
    x0 = np.array([0.0, 0.0, 6.0, 0.0])
    z = np.array([36.0, 0.0, 6.0, 0.0])
    return ILQRProblem(x0, z, window, cfg, BicycleModel(P)), window


def test_penetration_detector():
    prob, window = _dead_center_problem()
    straight = np.array([[6.0 * k, 0.0, 6.0, 0.0] for k in range(7)])
    assert _penetrates(straight, window)
    shifted = straight.copy()
    shifted[:, 1] = 30.0
    assert not _penetrates(shifted, window)
    assert not _penetrates(straight, None)


def test_restart_breaks_dead_center_symmetry():
    prob, window = _dead_center_problem()
    sol = solve(prob)
    assert not _penetrates(sol.states, window)
    # the detour actually leaves the axis
    assert np.abs(sol.states[:, 1]).max() > 1.0


def test_config_validation():
    with pytest.raises(ValueError):
        ILQRConfig(horizon=0)
    with pytest.raises(ValueError):
        ILQRConfig(barrier_q1=0.0)
    with pytest.raises(ValueError):
        ILQRConfig(convergence_tol=0.0)
    with pytest.raises(ValueError):
        ILQRConfig(terminal_weight=(1, -1, 1, 1))
