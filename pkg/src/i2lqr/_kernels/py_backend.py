"""Pure-numpy implementation of the trajectory-optimizer primitives.

This backend is the reference semantics: the compiled extension in
`_core.pyx` mirrors these functions for the bicycle model. It also serves
as the only path for non-bicycle dynamics (e.g. the linear systems used
in tests), since the compiled kernel hardcodes the bicycle equations.

Cost convention (no 1/2 factors):
    J = (x_N - z)^T diag(P) (x_N - z)
      + sum_k u_k^T diag(R) u_k
      + barrier terms: q1 * exp(q2 * g) for every constraint g <= 0,
        with the exponent clamped at BARRIER_EXP_CAP.

Constraints per stage k = 0..N-1: input-bound excess on u_k, and the
obstacle interiors (inflated by the planning margin) evaluated at x_{k+1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Exponent clamp for the barrier terms: exp() arguments above this are
# truncated, keeping deep violations at a large but finite penalty.
BARRIER_EXP_CAP = 50.0


@dataclass(frozen=True)
class PackedProblem:
    """Flat, array-only problem description shared by both backends.

    obs has shape (N, M, 4) with rows (cx, cy, ax, by); semi-axes are
    already inflated by the planning margin. nobs[k] gives the number of
    valid rows at stage k. a_max / d_max of +inf disable the input barrier.
    """

    x0: np.ndarray
    z: np.ndarray
    P: np.ndarray
    R: np.ndarray
    q1: float
    q2: float
    a_max: float
    d_max: float
    obs: np.ndarray
    nobs: np.ndarray
    N: int


def pack_problem(x0, z, config, window, input_bounds) -> PackedProblem:
    """Assemble a PackedProblem from config, terminal target and constraints."""
    N = config.horizon
    stages = window.stages if window is not None else tuple(() for _ in range(N))
    if len(stages) != N:
        raise ValueError(f"constraint window length {len(stages)} != horizon {N}")
    M = max((len(s) for s in stages), default=0)
    obs = np.zeros((N, max(M, 1), 4))
    nobs = np.zeros(N, dtype=np.int32)
    for k, poses in enumerate(stages):
        nobs[k] = len(poses)
        for i, p in enumerate(poses):
            obs[k, i] = (p.cx, p.cy, p.ax + p.margin, p.by + p.margin)
    return PackedProblem(
        x0=np.asarray(x0, dtype=float).copy(),
        z=np.asarray(z, dtype=float).copy(),
        P=np.asarray(config.terminal_weight, dtype=float).copy(),
        R=np.asarray(config.input_weight, dtype=float).copy(),
        q1=float(config.barrier_q1),
        q2=float(config.barrier_q2),
        a_max=float(input_bounds[0]),
        d_max=float(input_bounds[1]),
        obs=obs,
        nobs=nobs,
        N=N,
    )


def _bexp(q2: float, g: float) -> float:
    return math.exp(min(q2 * g, BARRIER_EXP_CAP))


class PyKernel:
    """Numpy implementation of rollout / cost / derivatives / LQR passes."""

    name = "python"

    def __init__(self, packed: PackedProblem, model):
        self.d = packed
        self.model = model

    # -- dynamics -----------------------------------------------------------

    def rollout(self, U: np.ndarray) -> np.ndarray:
        d = self.d
        X = np.empty((d.N + 1, d.x0.size))
        X[0] = d.x0
        for k in range(d.N):
            X[k + 1] = self.model.step(X[k], U[k])
        return X

    def linearize_traj(self, X: np.ndarray, U: np.ndarray):
        d = self.d
        nx, nu = X.shape[1], U.shape[1]
        A = np.empty((d.N, nx, nx))
        B = np.empty((d.N, nx, nu))
        for k in range(d.N):
            A[k], B[k] = self.model.linearize(X[k], U[k])
        return A, B

    # -- cost ---------------------------------------------------------------

    def _input_barrier(self, u):
        """Returns (value, grad (2,), hess diag (2,)) of the input-bound barrier."""
        d = self.d
        val, grad, hess = 0.0, np.zeros(2), np.zeros(2)
        for i, bound in enumerate((d.a_max, d.d_max)):
            if not math.isfinite(bound):
                continue
            e_hi = _bexp(d.q2, u[i] - bound)
            e_lo = _bexp(d.q2, -u[i] - bound)
            val += d.q1 * (e_hi + e_lo)
            grad[i] = d.q1 * d.q2 * (e_hi - e_lo)
            hess[i] = d.q1 * d.q2 * d.q2 * (e_hi + e_lo)
        return val, grad, hess

    def _state_barrier(self, x, stage: int):
        """Returns (value, grad (nx,), hess (nx,nx)) of the obstacle barrier."""
        d = self.d
        nx = x.size
        val, grad, hess = 0.0, np.zeros(nx), np.zeros((nx, nx))
        for i in range(d.nobs[stage]):
            cx, cy, ax, by = d.obs[stage, i]
            ex, ey = (x[0] - cx) / ax, (x[1] - cy) / by
            g = 1.0 - ex * ex - ey * ey
            e = d.q1 * _bexp(d.q2, g)
            gx = np.zeros(nx)
            gx[0] = -2.0 * ex / ax
            gx[1] = -2.0 * ey / by
            val += e
            grad += e * d.q2 * gx
            hess += e * (d.q2 * d.q2) * np.outer(gx, gx)
            hess[0, 0] += e * d.q2 * (-2.0 / (ax * ax))
            hess[1, 1] += e * d.q2 * (-2.0 / (by * by))
        return val, grad, hess

    def cost(self, X: np.ndarray, U: np.ndarray) -> float:
        d = self.d
        e = X[d.N] - d.z
        J = float(e @ (d.P * e))
        for k in range(d.N):
            J += float(U[k] @ (d.R * U[k]))
            J += self._input_barrier(U[k])[0]
            J += self._state_barrier(X[k + 1], k)[0]
        return J

    def cost_derivs(self, X: np.ndarray, U: np.ndarray):
        """Gradients/Hessians of the cost, indexed by state/input position.

        lx[k], lxx[k] cover the state terms attached to x_k (obstacle
        barrier for 1 <= k < N; terminal quadratic plus barrier at k = N).
        lu[k], luu[k] cover the input terms at stage k.
        """
        d = self.d
        nx, nu = X.shape[1], U.shape[1]
        lx = np.zeros((d.N + 1, nx))
        lxx = np.zeros((d.N + 1, nx, nx))
        lu = np.zeros((d.N, nu))
        luu = np.zeros((d.N, nu, nu))
        for k in range(d.N):
            _, gu, hu = self._input_barrier(U[k])
            lu[k] = 2.0 * d.R * U[k] + gu
            luu[k] = np.diag(2.0 * d.R + hu)
            _, gx, hx = self._state_barrier(X[k + 1], k)
            lx[k + 1] += gx
            lxx[k + 1] += hx
        e = X[d.N] - d.z
        lx[d.N] += 2.0 * d.P * e
        lxx[d.N] += np.diag(2.0 * d.P)
        return lx, lxx, lu, luu

    # -- LQR passes ---------------------------------------------------------

    def backward(self, A, B, lx, lxx, lu, luu, lam: float):
        """Riccati sweep; returns (kff, K, ok, d1, d2).

        d1 = sum_k kff_k . Qu_k and d2 = sum_k kff_k . Quu_k kff_k feed the
        expected cost decrease alpha*d1 + alpha^2/2 * d2. ok is False when
        a regularized Quu fails its Cholesky check (caller raises lam).
        """
        d = self.d
        nx, nu = lx.shape[1], lu.shape[1]
        kff = np.zeros((d.N, nu))
        K = np.zeros((d.N, nu, nx))
        Vx = lx[d.N].copy()
        Vxx = lxx[d.N].copy()
        d1 = d2 = 0.0
        eye = np.eye(nu)
        for k in range(d.N - 1, -1, -1):
            Ak, Bk = A[k], B[k]
            Qx = lx[k] + Ak.T @ Vx
            Qu = lu[k] + Bk.T @ Vx
            Qxx = lxx[k] + Ak.T @ Vxx @ Ak
            Quu = luu[k] + Bk.T @ Vxx @ Bk
            Qux = Bk.T @ Vxx @ Ak
            Quu_reg = 0.5 * (Quu + Quu.T) + lam * eye
            try:
                L = np.linalg.cholesky(Quu_reg)
            except np.linalg.LinAlgError:
                return kff, K, False, 0.0, 0.0
            kk = -np.linalg.solve(Quu_reg, Qu)
            Kk = -np.linalg.solve(Quu_reg, Qux)
            kff[k] = kk
            K[k] = Kk
            d1 += float(kk @ Qu)
            d2 += float(kk @ Quu @ kk)
            Vx = Qx + Kk.T @ Quu @ kk + Kk.T @ Qu + Qux.T @ kk
            Vxx = Qxx + Kk.T @ Quu @ Kk + Kk.T @ Qux + Qux.T @ Kk
            Vxx = 0.5 * (Vxx + Vxx.T)
        return kff, K, True, d1, d2

    def forward(self, X, U, kff, K, alpha: float):
        """Closed-loop re-rollout with saturated updated inputs."""
        d = self.d
        Xn = np.empty_like(X)
        Un = np.empty_like(U)
        Xn[0] = X[0]
        for k in range(d.N):
            u = U[k] + alpha * kff[k] + K[k] @ (Xn[k] - X[k])
            Un[k] = self.model.saturate(u)
            Xn[k + 1] = self.model.step(Xn[k], Un[k])
        return Xn, Un
