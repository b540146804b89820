"""Bicycle model: stepping, rollout, Jacobians, angle handling."""

import math

import numpy as np
import pytest

from i2lqr.dynamics import (A_MAX, DELTA_MAX, ModelParams, linearize, rollout,
                            saturate, state_distance, step, wrap_angle)

P = ModelParams()


def test_rest_zero_input_is_fixed_point():
    s = np.zeros(4)
    assert np.array_equal(step(s, np.zeros(2), P), s)


def test_straight_acceleration():
    s = step(np.zeros(4), np.array([2.0, 0.0]), P)
    # position advances with the current (zero) speed, speed with the input
    assert np.allclose(s, [0.0, 0.0, 2.0, 0.0])
    s2 = step(s, np.array([2.0, 0.0]), P)
    assert np.allclose(s2, [2.0, 0.0, 4.0, 0.0])


def test_single_step_against_hand_formula():
    s = np.array([0.0, 0.0, 1.0, 0.0])
    u = np.array([0.0, 0.3])
    got = step(s, u, P)
    # independent scalar evaluation of the Euler step
    beta = math.atan(0.5 * math.tan(0.3))
    want = np.array([
        1.0 * math.cos(beta),
        1.0 * math.sin(beta),
        1.0,
        (1.0 / 0.5) * math.sin(beta),
    ])
    assert np.allclose(got, want, atol=1e-12)


def test_rollout_matches_repeated_steps():
    inputs = np.array([[2.0, 0.0], [2.0, 0.1], [-2.0, -0.1]])
    X = rollout(np.zeros(4), inputs, P)
    assert X.shape == (4, 4)
    x = np.zeros(4)
    for k, u in enumerate(inputs):
        x = step(x, u, P)
        assert np.array_equal(X[k + 1], x)


def test_saturate_bounds():
    u = saturate(np.array([5.0, -3.0]))
    assert u[0] == A_MAX and u[1] == -DELTA_MAX
    u = saturate(np.array([-0.5, 0.2]))
    assert np.array_equal(u, [-0.5, 0.2])


def test_linearize_matches_finite_differences(rng):
    h = 1e-6
    for _ in range(20):
        s = rng.uniform([-5, -5, 0.5, -1], [5, 5, 12, 1])
        u = rng.uniform([-1.5, -0.8], [1.5, 0.8])
        A, B = linearize(s, u, P)
        A_fd = np.column_stack([(step(s + h * e, u, P) - step(s - h * e, u, P)) / (2 * h)
                                for e in np.eye(4)])
        B_fd = np.column_stack([(step(s, u + h * e, P) - step(s, u - h * e, P)) / (2 * h)
                                for e in np.eye(2)])
        scale = max(1.0, np.abs(A).max(), np.abs(B).max())
        assert np.abs(A - A_fd).max() / scale < 1e-5
        assert np.abs(B - B_fd).max() / scale < 1e-5


def test_wrap_angle_range_and_identity():
    vals = np.array([0.0, 3.0, -3.0, np.pi, -np.pi, 7.0, -7.0, 4 * np.pi])
    w = wrap_angle(vals)
    assert np.all(w > -np.pi - 1e-12) and np.all(w <= np.pi + 1e-12)
    # wrapping is idempotent and preserves already-wrapped angles
    assert np.allclose(wrap_angle(w), w)
    assert np.isclose(wrap_angle(2 * np.pi + 0.25), 0.25)


def test_state_distance_wraps_heading():
    a = np.array([1.0, 2.0, 3.0, 2 * np.pi])
    b = np.array([1.0, 2.0, 3.0, 0.0])
    assert state_distance(a, b) < 1e-9
    arr = np.stack([a, b])
    d = state_distance(arr, b)
    assert d.shape == (2,) and d[0] < 1e-9 and d[1] == 0.0


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(dt=0.0)
    with pytest.raises(ValueError):
        ModelParams(lf=-1.0, lr=0.5)
