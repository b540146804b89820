"""Obstacle schedule and time-varying constraint evaluation.

Obstacles are ellipses or circles, optionally moving at constant velocity
and optionally active only in selected iterations. The controller sees
constant-velocity extrapolations of moving obstacles along its prediction
horizon; the post-hoc collision audit uses each state's actual wall time
and no safety margin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import A_MAX, DELTA_MAX


@dataclass(frozen=True)
class ObstacleSpec:
    """One obstacle in the scenario schedule.

    `semi_axes` is (a, b); circles store (r, r). `active_iterations` is a
    frozenset of iteration indices, or None meaning active in every
    iteration. Motion starts at `spawn_time` (a time step within the
    iteration); before it the obstacle sits at `center0`.
    """

    shape: str  # "ellipse" | "circle"
    center0: tuple[float, float]
    semi_axes: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    active_iterations: frozenset | None = None
    spawn_time: int = 0
    safety_margin: float = 0.5

    def __post_init__(self):
        if self.shape not in ("ellipse", "circle"):
            raise ValueError(f"unknown obstacle shape {self.shape!r}")
        if not (self.semi_axes[0] > 0 and self.semi_axes[1] > 0):
            raise ValueError(f"obstacle semi-axes must be positive, got {self.semi_axes}")
        if self.safety_margin < 0:
            raise ValueError(f"safety_margin must be nonnegative, got {self.safety_margin}")

    def active_in(self, iteration: int) -> bool:
        return self.active_iterations is None or iteration in self.active_iterations

    def center_at(self, time_step: int, dt: float) -> tuple[float, float]:
        """Center at a wall time step, clamped to center0 before spawn_time."""
        tau = max(0, time_step - self.spawn_time) * dt
        return (self.center0[0] + self.velocity[0] * tau,
                self.center0[1] + self.velocity[1] * tau)


@dataclass(frozen=True)
class ObstaclePose:
    """An obstacle snapshot at one predicted time: center, semi-axes, margin."""

    cx: float
    cy: float
    ax: float
    by: float
    margin: float


@dataclass(frozen=True)
class ConstraintWindow:
    """Per-step constraint sets along a prediction horizon.

    stages[k-1] holds the obstacle poses for predicted step k = 1..N
    (i.e. wall time t+k). Input bounds are static.
    """

    stages: tuple  # tuple of tuples of ObstaclePose
    a_max: float = A_MAX
    delta_max: float = DELTA_MAX

    def __len__(self) -> int:
        return len(self.stages)


def _poses_at(obstacles, iteration: int, time_step: int, dt: float) -> tuple:
    poses = []
    for ob in obstacles:
        if not ob.active_in(iteration):
            continue
        cx, cy = ob.center_at(time_step, dt)
        poses.append(ObstaclePose(cx, cy, ob.semi_axes[0], ob.semi_axes[1], ob.safety_margin))
    return tuple(poses)


def constraint_window(obstacles, iteration: int, t: int, horizon: int, dt: float) -> ConstraintWindow:
    """Constraint sets for predicted steps t+1 .. t+N of iteration `iteration`."""
    stages = tuple(_poses_at(obstacles, iteration, t + k, dt) for k in range(1, horizon + 1))
    return ConstraintWindow(stages)


def violation(state, poses, margin: float | None = None) -> np.ndarray:
    """Constraint values g (one per obstacle), g <= 0 means clear.

    g = 1 - ((x-cx)/(a+m))^2 - ((y-cy)/(b+m))^2, positive inside the
    inflated obstacle. `margin` overrides each pose's own safety margin
    (the audit passes 0).
    """
    x, y = float(state[0]), float(state[1])
    out = np.empty(len(poses))
    for i, p in enumerate(poses):
        m = p.margin if margin is None else margin
        out[i] = 1.0 - ((x - p.cx) / (p.ax + m)) ** 2 - ((y - p.cy) / (p.by + m)) ** 2
    return out


def collision_free(states, obstacles, iteration: int, t0: int, dt: float) -> bool:
    """True iff every state clears every obstacle at its own wall time.

    Uses the raw obstacle extent (safety margin 0); planning inflation is
    intentional conservatism and not part of the audit.
    """
    for s_idx, state in enumerate(np.asarray(states, dtype=float).reshape(-1, 4)):
        poses = _poses_at(obstacles, iteration, t0 + s_idx, dt)
        if poses and np.any(violation(state, poses, margin=0.0) > 0.0):
            return False
    return True


def min_clearance(states, obstacles, iteration: int, t0: int, dt: float) -> float | None:
    """Approximate minimum boundary clearance over a trajectory, in meters.

    For reporting only: uses the normalized ellipse radius, exact for
    circles, approximate for ellipses. None when no obstacle is active.
    """
    best = None
    for s_idx, state in enumerate(np.asarray(states, dtype=float).reshape(-1, 4)):
        poses = _poses_at(obstacles, iteration, t0 + s_idx, dt)
        for p in poses:
            rho = np.hypot((state[0] - p.cx) / p.ax, (state[1] - p.cy) / p.by)
            clear = (rho - 1.0) * min(p.ax, p.by)
            if best is None or clear < best:
                best = clear
    return best
