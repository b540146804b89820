"""Discrete-time kinematic bicycle model.

State vector: [x, y, v, theta]; input vector: [a, delta].
Forward-Euler discretization with a coarse sampling time (1 s by default),
so the model is treated as genuinely discrete rather than a fine ODE
approximation. Heading integrates on the real line; distances involving
heading wrap it to (-pi, pi] (see wrap_angle / state_distance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Hard input bounds, applied by `saturate` and audited downstream.
A_MAX = 2.0  # m/s^2
DELTA_MAX = math.pi / 2  # rad

NX = 4
NU = 2


@dataclass(frozen=True)
class State:
    """Bicycle state at one time step. Convenience wrapper over the raw 4-vector."""

    x: float
    y: float
    v: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.v, self.theta], dtype=float)

    @staticmethod
    def from_array(arr) -> "State":
        x, y, v, theta = (float(c) for c in arr)
        return State(x, y, v, theta)


@dataclass(frozen=True)
class Input:
    """Acceleration / steering input at one time step."""

    a: float
    delta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.delta], dtype=float)

    @staticmethod
    def from_array(arr) -> "Input":
        a, delta = (float(c) for c in arr)
        return Input(a, delta)


@dataclass(frozen=True)
class ModelParams:
    """Sampling time and axle geometry (front/rear distances to the CoG)."""

    dt: float = 1.0
    lf: float = 0.5
    lr: float = 0.5

    def __post_init__(self):
        if not (self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (self.lf + self.lr > 0) or self.lf < 0 or self.lr < 0:
            raise ValueError(f"axle lengths must be nonnegative with lf+lr > 0, got lf={self.lf}, lr={self.lr}")


def wrap_angle(theta):
    """Map an angle (or array of angles) to (-pi, pi].

    The model itself integrates theta on the real line, but any *distance*
    involving heading treats it as circular: a vehicle that has wound its
    heading through a full turn is back where it started, not 2*pi away.
    """
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2.0 * np.pi)


def state_distance(states, ref) -> np.ndarray:
    """Euclidean distance between states and a reference, heading wrapped.

    `states` may be a single state vector or an (n, 4) array; returns a
    scalar array of distances accordingly.
    """
    diff = np.atleast_2d(np.asarray(states, dtype=float)) - np.asarray(ref, dtype=float)
    diff[:, 3] = wrap_angle(diff[:, 3])
    out = np.linalg.norm(diff, axis=1)
    return out if np.asarray(states).ndim == 2 else out[0]


def saturate(u: np.ndarray) -> np.ndarray:
    """Clamp the input componentwise to the hard bounds."""
    u = np.asarray(u, dtype=float)
    return np.array([
        min(max(u[0], -A_MAX), A_MAX),
        min(max(u[1], -DELTA_MAX), DELTA_MAX),
    ])


def step(s: np.ndarray, u: np.ndarray, p: ModelParams) -> np.ndarray:
    """One forward-Euler step of the rear-slip kinematic bicycle.

    Callers are expected to pass an already saturated input; no clamping
    happens here.
    """
    x, y, v, theta = float(s[0]), float(s[1]), float(s[2]), float(s[3])
    a, delta = float(u[0]), float(u[1])
    c = p.lr / (p.lf + p.lr)
    beta = math.atan(c * math.tan(delta))
    phi = theta + beta
    return np.array([
        x + p.dt * v * math.cos(phi),
        y + p.dt * v * math.sin(phi),
        v + p.dt * a,
        theta + p.dt * (v / p.lr) * math.sin(beta),
    ])


def rollout(x0: np.ndarray, inputs: np.ndarray, p: ModelParams) -> np.ndarray:
    """Open-loop state sequence under a given input sequence.

    Returns an array of shape (len(inputs)+1, 4) with row 0 equal to x0.
    """
    inputs = np.asarray(inputs, dtype=float).reshape(-1, NU)
    n = inputs.shape[0]
    out = np.empty((n + 1, NX))
    out[0] = np.asarray(x0, dtype=float)
    for k in range(n):
        out[k + 1] = step(out[k], inputs[k], p)
    return out


def linearize(s: np.ndarray, u: np.ndarray, p: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobians (A, B) of `step` at (s, u)."""
    v, theta = float(s[2]), float(s[3])
    delta = float(u[1])
    c = p.lr / (p.lf + p.lr)
    td = math.tan(delta)
    beta = math.atan(c * td)
    phi = theta + beta
    sin_phi, cos_phi = math.sin(phi), math.cos(phi)
    # d(beta)/d(delta) through atan(c*tan(delta))
    dbeta = c * (1.0 + td * td) / (1.0 + (c * td) ** 2)

    dt = p.dt
    A = np.array([
        [1.0, 0.0, dt * cos_phi, -dt * v * sin_phi],
        [0.0, 1.0, dt * sin_phi, dt * v * cos_phi],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, dt * math.sin(beta) / p.lr, 1.0],
    ])
    B = np.array([
        [0.0, -dt * v * sin_phi * dbeta],
        [0.0, dt * v * cos_phi * dbeta],
        [dt, 0.0],
        [0.0, dt * (v / p.lr) * math.cos(beta) * dbeta],
    ])
    return A, B
