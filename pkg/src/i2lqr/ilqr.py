"""Constrained finite-time trajectory optimization via iterative LQR.

Solves, for one terminal candidate z, the problem

    min_u  (x_N - z)^T P (x_N - z) + sum_k u_k^T R u_k
    s.t.   x_{k+1} = f(x_k, u_k),  x_0 fixed,
           obstacle / input-bound constraints handled as exponential
           barrier terms q1*exp(q2*g) folded into the cost.

The inner loop alternates a Riccati backward pass on the time-varying
linearization with a closed-loop forward rollout, accepting only
cost-decreasing steps (backtracking step length, Levenberg regularization
on Quu). Inputs are additionally hard-clamped during the forward pass, so
returned solutions always satisfy the input bounds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .dynamics import A_MAX, DELTA_MAX, ModelParams, linearize as _blin, rollout as _broll, saturate as _bsat, step as _bstep
from .environment import violation

BACKTRACK_ALPHAS = (1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625)
RESTART_STEER_BIAS = 0.02  # rad, symmetry-breaking initialization offset


@dataclass(frozen=True)
class ILQRConfig:
    horizon: int = 6
    terminal_weight: tuple = (1.0, 1.0, 1.0, 1.0)
    input_weight: tuple = (1e-3, 1e-3)
    barrier_q1: float = 1.0
    barrier_q2: float = 10.0
    max_iterations: int = 50
    convergence_tol: float = 1e-4
    reg_init: float = 1e-8
    reg_max: float = 1e8

    def __post_init__(self):
        if self.horizon < 1 or self.max_iterations < 1:
            raise ValueError("horizon and max_iterations must be >= 1")
        if self.barrier_q1 <= 0 or self.barrier_q2 <= 0:
            raise ValueError("barrier parameters must be positive")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")
        if any(w < 0 for w in self.terminal_weight) or any(w < 0 for w in self.input_weight):
            raise ValueError("cost weights must be nonnegative")


class BicycleModel:
    """Adapter exposing the bicycle dynamics to the solver.

    `compiled_eligible` marks it as runnable on the Cython kernel.
    """

    compiled_eligible = True
    input_bounds = (A_MAX, DELTA_MAX)

    def __init__(self, params: ModelParams):
        self.params = params

    def step(self, x, u):
        return _bstep(x, u, self.params)

    def rollout(self, x0, U):
        return _broll(x0, U, self.params)

    def linearize(self, x, u):
        return _blin(x, u, self.params)

    def saturate(self, u):
        return _bsat(u)


@dataclass(frozen=True)
class ILQRProblem:
    """One solve: initial state, terminal target, constraint window, config."""

    initial_state: np.ndarray
    target: np.ndarray
    window: object  # environment.ConstraintWindow or None
    config: ILQRConfig
    model: object
    u_init: np.ndarray | None = None  # warm-start input sequence (horizon, nu)

    def packed(self) -> _kernels.PackedProblem:
        bounds = getattr(self.model, "input_bounds", (np.inf, np.inf))
        return _kernels.pack_problem(self.initial_state, self.target, self.config,
                                     self.window, bounds)


@dataclass(frozen=True)
class ILQRSolution:
    states: np.ndarray  # (N+1, nx), dynamically consistent with inputs
    inputs: np.ndarray  # (N, nu), saturated
    final_cost: float
    converged: bool
    iterations_used: int


def _py_kernel(problem: ILQRProblem) -> _kernels.PyKernel:
    return _kernels.PyKernel(problem.packed(), problem.model)


def total_cost(states, inputs, problem: ILQRProblem) -> float:
    """Barrier-augmented objective of a dynamically consistent trajectory."""
    return _py_kernel(problem).cost(np.asarray(states, dtype=float),
                                    np.asarray(inputs, dtype=float))


def backward_pass(states, inputs, problem: ILQRProblem, lam: float):
    """One Riccati sweep at the given regularization.

    Returns (kff, K). Raises ArithmeticError when the regularized Quu is
    not positive definite, telling the caller to raise lam and retry.
    """
    kern = _py_kernel(problem)
    X = np.asarray(states, dtype=float)
    U = np.asarray(inputs, dtype=float)
    A, B = kern.linearize_traj(X, U)
    lx, lxx, lu, luu = kern.cost_derivs(X, U)
    kff, K, ok, _, _ = kern.backward(A, B, lx, lxx, lu, luu, lam)
    if not ok:
        raise ArithmeticError(f"Quu not positive definite at lam={lam}; raise regularization")
    return kff, K


def forward_pass(states, inputs, gains, alpha: float, problem: ILQRProblem):
    """Closed-loop rollout of the updated policy at step length alpha."""
    kff, K = gains
    return _py_kernel(problem).forward(np.asarray(states, dtype=float),
                                       np.asarray(inputs, dtype=float),
                                       np.asarray(kff, dtype=float),
                                       np.asarray(K, dtype=float), alpha)


def _penetrates(states, window) -> bool:
    """True when a planned trajectory enters any inflated obstacle."""
    if window is None:
        return False
    states = np.asarray(states, dtype=float)
    for k, stage in enumerate(getattr(window, "stages", ())):
        if stage and np.any(violation(states[k + 1], stage) > 0.0):
            return True
    return False


def solve(problem: ILQRProblem) -> ILQRSolution:
    """Run the full iterative optimization.

    Starts from the problem's warm-start input sequence when given (e.g.
    the previous control step's plan shifted by one, which keeps the
    receding horizon from flipping between detour homotopies on every
    step), otherwise from zero inputs. Always returns the best iterate
    found; `converged` reports whether the relative cost decrease fell
    below the tolerance before max_iterations.

    If the result still penetrates an inflated obstacle, the solve is
    retried from steering-biased initializations (+/-). An obstacle dead
    center on the initial trajectory puts the barrier's lateral gradient
    exactly at zero (a saddle ridge); the deterministic bias breaks that
    symmetry, and the best obstacle-clearing restart wins.
    """
    cfg = problem.config
    kern = _kernels.make_kernel(problem.packed(), problem.model)
    nu = len(cfg.input_weight)

    if problem.u_init is not None:
        U0 = np.asarray(problem.u_init, dtype=float).reshape(cfg.horizon, nu)
        U0 = np.array([problem.model.saturate(u) for u in U0])
    else:
        U0 = np.zeros((cfg.horizon, nu))

    sol = _solve_from(problem, kern, U0)
    if _penetrates(sol.states, problem.window):
        for sign in (1.0, -1.0):
            Ub = U0.copy()
            Ub[:, 1] += sign * RESTART_STEER_BIAS
            Ub = np.array([problem.model.saturate(u) for u in Ub])
            alt = _solve_from(problem, kern, Ub)
            better_clear = not _penetrates(alt.states, problem.window)
            if better_clear and (_penetrates(sol.states, problem.window)
                                 or alt.final_cost < sol.final_cost):
                sol = alt
    return sol


def _solve_from(problem: ILQRProblem, kern, U: np.ndarray) -> ILQRSolution:
    """The iLQR loop proper, from one (already saturated) initial input plan."""
    cfg = problem.config
    X = kern.rollout(U)
    J = kern.cost(X, U)
    best = (J, X, U)
    lam = cfg.reg_init
    converged = False
    iterations = 0

    for m in range(cfg.max_iterations):
        iterations = m + 1
        A, B = kern.linearize_traj(X, U)
        lx, lxx, lu, luu = kern.cost_derivs(X, U)

        while True:
            kff, K, ok, d1, d2 = kern.backward(A, B, lx, lxx, lu, luu, lam)
            if ok:
                break
            lam *= 10.0
            if lam > cfg.reg_max:
                return ILQRSolution(best[1], best[2], best[0], False, iterations)

        # quadratic-model decrease at full step; if negligible, we are done
        expected = -(d1 + 0.5 * d2)
        if abs(expected) < cfg.convergence_tol * max(1.0, abs(J)) and lam <= 10.0 * cfg.reg_init:
            converged = True
            break

        accepted = False
        for alpha in BACKTRACK_ALPHAS:
            Xn, Un = kern.forward(X, U, kff, K, alpha)
            Jn = kern.cost(Xn, Un)
            if Jn < J:
                accepted = True
                break

        if accepted:
            rel = (J - Jn) / max(1.0, abs(J))
            X, U, J = Xn, Un, Jn
            if J < best[0]:
                best = (J, X, U)
            lam = max(lam / 10.0, cfg.reg_init)
            if rel < cfg.convergence_tol:
                converged = True
                break
        else:
            lam *= 10.0
            if lam > cfg.reg_max:
                break

    return ILQRSolution(states=best[1], inputs=best[2], final_cost=best[0],
                        converged=converged, iterations_used=iterations)
