# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled bicycle-model kernel.

Mirrors py_backend.PyKernel for the kinematic bicycle: same cost
convention, same barrier clamp, same Riccati sweep. Only valid for the
bicycle dynamics; generic models stay on the numpy backend.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport atan, tan, sin, cos, exp, fmin, fmax, isfinite

cnp.import_array()

cdef double BARRIER_EXP_CAP = 50.0


cdef inline double _bexp(double q2, double g) nogil:
    return exp(fmin(q2 * g, BARRIER_EXP_CAP))


cdef class CoreBicycleKernel:
    cdef public str name
    cdef double dt, lf, lr, c
    cdef double a_max, d_max
    cdef double q1, q2
    cdef double[::1] P, R, z, x0
    cdef double[:, :, ::1] obs
    cdef int[::1] nobs
    cdef int N
    cdef bint input_barrier

    def __init__(self, packed):
        self.name = "compiled"
        d = packed
        self.dt = d.model_dt
        self.lf = d.model_lf
        self.lr = d.model_lr
        self.c = self.lr / (self.lf + self.lr)
        self.a_max = d.a_max
        self.d_max = d.d_max
        self.q1 = d.q1
        self.q2 = d.q2
        self.P = np.ascontiguousarray(d.P, dtype=np.float64)
        self.R = np.ascontiguousarray(d.R, dtype=np.float64)
        self.z = np.ascontiguousarray(d.z, dtype=np.float64)
        self.x0 = np.ascontiguousarray(d.x0, dtype=np.float64)
        self.obs = np.ascontiguousarray(d.obs, dtype=np.float64)
        self.nobs = np.ascontiguousarray(d.nobs, dtype=np.int32)
        self.N = d.N
        self.input_barrier = isfinite(d.a_max) or isfinite(d.d_max)

    # -- dynamics -----------------------------------------------------------

    cdef void _step(self, double* s, double a, double delta, double* out) nogil:
        cdef double beta = atan(self.c * tan(delta))
        cdef double phi = s[3] + beta
        out[0] = s[0] + self.dt * s[2] * cos(phi)
        out[1] = s[1] + self.dt * s[2] * sin(phi)
        out[2] = s[2] + self.dt * a
        out[3] = s[3] + self.dt * (s[2] / self.lr) * sin(beta)

    def rollout(self, cnp.ndarray[double, ndim=2] U):
        cdef cnp.ndarray[double, ndim=2] X = np.empty((self.N + 1, 4))
        cdef int k
        X[0, 0] = self.x0[0]; X[0, 1] = self.x0[1]
        X[0, 2] = self.x0[2]; X[0, 3] = self.x0[3]
        for k in range(self.N):
            self._step(&X[k, 0], U[k, 0], U[k, 1], &X[k + 1, 0])
        return X

    def linearize_traj(self, cnp.ndarray[double, ndim=2] X, cnp.ndarray[double, ndim=2] U):
        cdef cnp.ndarray[double, ndim=3] A = np.zeros((self.N, 4, 4))
        cdef cnp.ndarray[double, ndim=3] B = np.zeros((self.N, 4, 2))
        cdef int k
        cdef double v, td, beta, phi, sp, cp, dbeta
        for k in range(self.N):
            v = X[k, 2]
            td = tan(U[k, 1])
            beta = atan(self.c * td)
            phi = X[k, 3] + beta
            sp = sin(phi); cp = cos(phi)
            dbeta = self.c * (1.0 + td * td) / (1.0 + self.c * self.c * td * td)
            A[k, 0, 0] = 1.0; A[k, 0, 2] = self.dt * cp; A[k, 0, 3] = -self.dt * v * sp
            A[k, 1, 1] = 1.0; A[k, 1, 2] = self.dt * sp; A[k, 1, 3] = self.dt * v * cp
            A[k, 2, 2] = 1.0
            A[k, 3, 2] = self.dt * sin(beta) / self.lr; A[k, 3, 3] = 1.0
            B[k, 0, 1] = -self.dt * v * sp * dbeta
            B[k, 1, 1] = self.dt * v * cp * dbeta
            B[k, 2, 0] = self.dt
            B[k, 3, 1] = self.dt * (v / self.lr) * cos(beta) * dbeta
        return A, B

    # -- cost ---------------------------------------------------------------

    cdef double _input_barrier_val(self, double a, double delta) nogil:
        cdef double val = 0.0
        if isfinite(self.a_max):
            val += self.q1 * (_bexp(self.q2, a - self.a_max) + _bexp(self.q2, -a - self.a_max))
        if isfinite(self.d_max):
            val += self.q1 * (_bexp(self.q2, delta - self.d_max) + _bexp(self.q2, -delta - self.d_max))
        return val

    cdef double _state_barrier_val(self, double x, double y, int stage) nogil:
        cdef double val = 0.0
        cdef double ex, ey, g
        cdef int i
        for i in range(self.nobs[stage]):
            ex = (x - self.obs[stage, i, 0]) / self.obs[stage, i, 2]
            ey = (y - self.obs[stage, i, 1]) / self.obs[stage, i, 3]
            g = 1.0 - ex * ex - ey * ey
            val += self.q1 * _bexp(self.q2, g)
        return val

    def cost(self, cnp.ndarray[double, ndim=2] X, cnp.ndarray[double, ndim=2] U):
        cdef double J = 0.0
        cdef double e
        cdef int k, i
        for i in range(4):
            e = X[self.N, i] - self.z[i]
            J += e * self.P[i] * e
        for k in range(self.N):
            J += U[k, 0] * self.R[0] * U[k, 0] + U[k, 1] * self.R[1] * U[k, 1]
            J += self._input_barrier_val(U[k, 0], U[k, 1])
            J += self._state_barrier_val(X[k + 1, 0], X[k + 1, 1], k)
        return J

    def cost_derivs(self, cnp.ndarray[double, ndim=2] X, cnp.ndarray[double, ndim=2] U):
        cdef cnp.ndarray[double, ndim=2] lx = np.zeros((self.N + 1, 4))
        cdef cnp.ndarray[double, ndim=3] lxx = np.zeros((self.N + 1, 4, 4))
        cdef cnp.ndarray[double, ndim=2] lu = np.zeros((self.N, 2))
        cdef cnp.ndarray[double, ndim=3] luu = np.zeros((self.N, 2, 2))
        cdef int k, i
        cdef double bound, e_hi, e_lo, u
        cdef double cx, cy, ax, by, ex, ey, g, ebar, gx0, gx1
        for k in range(self.N):
            for i in range(2):
                lu[k, i] = 2.0 * self.R[i] * U[k, i]
                luu[k, i, i] = 2.0 * self.R[i]
                bound = self.a_max if i == 0 else self.d_max
                if isfinite(bound):
                    u = U[k, i]
                    e_hi = _bexp(self.q2, u - bound)
                    e_lo = _bexp(self.q2, -u - bound)
                    lu[k, i] += self.q1 * self.q2 * (e_hi - e_lo)
                    luu[k, i, i] += self.q1 * self.q2 * self.q2 * (e_hi + e_lo)
            for i in range(self.nobs[k]):
                cx = self.obs[k, i, 0]; cy = self.obs[k, i, 1]
                ax = self.obs[k, i, 2]; by = self.obs[k, i, 3]
                ex = (X[k + 1, 0] - cx) / ax
                ey = (X[k + 1, 1] - cy) / by
                g = 1.0 - ex * ex - ey * ey
                ebar = self.q1 * _bexp(self.q2, g)
                gx0 = -2.0 * ex / ax
                gx1 = -2.0 * ey / by
                lx[k + 1, 0] += ebar * self.q2 * gx0
                lx[k + 1, 1] += ebar * self.q2 * gx1
                lxx[k + 1, 0, 0] += ebar * (self.q2 * self.q2 * gx0 * gx0 + self.q2 * (-2.0 / (ax * ax)))
                lxx[k + 1, 0, 1] += ebar * self.q2 * self.q2 * gx0 * gx1
                lxx[k + 1, 1, 0] += ebar * self.q2 * self.q2 * gx1 * gx0
                lxx[k + 1, 1, 1] += ebar * (self.q2 * self.q2 * gx1 * gx1 + self.q2 * (-2.0 / (by * by)))
        for i in range(4):
            lx[self.N, i] += 2.0 * self.P[i] * (X[self.N, i] - self.z[i])
            lxx[self.N, i, i] += 2.0 * self.P[i]
        return lx, lxx, lu, luu

    # -- LQR passes ---------------------------------------------------------

    def backward(self,
                 cnp.ndarray[double, ndim=3] A, cnp.ndarray[double, ndim=3] B,
                 cnp.ndarray[double, ndim=2] lx, cnp.ndarray[double, ndim=3] lxx,
                 cnp.ndarray[double, ndim=2] lu, cnp.ndarray[double, ndim=3] luu,
                 double lam):
        cdef cnp.ndarray[double, ndim=2] kff = np.zeros((self.N, 2))
        cdef cnp.ndarray[double, ndim=3] K = np.zeros((self.N, 2, 4))
        cdef double[4] Vx
        cdef double[4][4] Vxx
        cdef double[4] Qx
        cdef double[2] Qu
        cdef double[4][4] Qxx
        cdef double[2][2] Quu
        cdef double[2][4] Qux
        cdef double[4][4] VA   # Vxx @ A_k
        cdef double[4][2] VB   # Vxx @ B_k
        cdef double[2][2] Qr   # regularized Quu
        cdef double[2][2] Qinv
        cdef double det
        cdef double[2] kk
        cdef double[2][4] Kk
        cdef double d1 = 0.0, d2 = 0.0
        cdef double acc
        cdef int k, i, j, m

        for i in range(4):
            Vx[i] = lx[self.N, i]
            for j in range(4):
                Vxx[i][j] = lxx[self.N, i, j]

        for k in range(self.N - 1, -1, -1):
            for i in range(4):
                for j in range(4):
                    acc = 0.0
                    for m in range(4):
                        acc += Vxx[i][m] * A[k, m, j]
                    VA[i][j] = acc
                for j in range(2):
                    acc = 0.0
                    for m in range(4):
                        acc += Vxx[i][m] * B[k, m, j]
                    VB[i][j] = acc
            for i in range(4):
                acc = lx[k, i]
                for m in range(4):
                    acc += A[k, m, i] * Vx[m]
                Qx[i] = acc
            for i in range(2):
                acc = lu[k, i]
                for m in range(4):
                    acc += B[k, m, i] * Vx[m]
                Qu[i] = acc
            for i in range(4):
                for j in range(4):
                    acc = lxx[k, i, j]
                    for m in range(4):
                        acc += A[k, m, i] * VA[m][j]
                    Qxx[i][j] = acc
            for i in range(2):
                for j in range(2):
                    acc = luu[k, i, j]
                    for m in range(4):
                        acc += B[k, m, i] * VB[m][j]
                    Quu[i][j] = acc
                for j in range(4):
                    acc = 0.0
                    for m in range(4):
                        acc += B[k, m, i] * VA[m][j]
                    Qux[i][j] = acc

            # symmetrized + regularized Quu; 2x2 PD check and inverse
            Qr[0][0] = Quu[0][0] + lam
            Qr[1][1] = Quu[1][1] + lam
            Qr[0][1] = 0.5 * (Quu[0][1] + Quu[1][0])
            Qr[1][0] = Qr[0][1]
            det = Qr[0][0] * Qr[1][1] - Qr[0][1] * Qr[1][0]
            if Qr[0][0] <= 0.0 or det <= 0.0:
                return kff, K, False, 0.0, 0.0
            Qinv[0][0] = Qr[1][1] / det
            Qinv[1][1] = Qr[0][0] / det
            Qinv[0][1] = -Qr[0][1] / det
            Qinv[1][0] = -Qr[1][0] / det

            for i in range(2):
                kk[i] = -(Qinv[i][0] * Qu[0] + Qinv[i][1] * Qu[1])
                for j in range(4):
                    Kk[i][j] = -(Qinv[i][0] * Qux[0][j] + Qinv[i][1] * Qux[1][j])
                kff[k, i] = kk[i]
                for j in range(4):
                    K[k, i, j] = Kk[i][j]

            d1 += kk[0] * Qu[0] + kk[1] * Qu[1]
            d2 += (kk[0] * (Quu[0][0] * kk[0] + Quu[0][1] * kk[1])
                   + kk[1] * (Quu[1][0] * kk[0] + Quu[1][1] * kk[1]))

            # Vx = Qx + K^T Quu kff + K^T Qu + Qux^T kff
            for i in range(4):
                acc = Qx[i]
                for m in range(2):
                    acc += Kk[m][i] * (Quu[m][0] * kk[0] + Quu[m][1] * kk[1])
                    acc += Kk[m][i] * Qu[m]
                    acc += Qux[m][i] * kk[m]
                Vx[i] = acc
            # Vxx = Qxx + K^T Quu K + K^T Qux + Qux^T K, symmetrized
            for i in range(4):
                for j in range(4):
                    acc = Qxx[i][j]
                    for m in range(2):
                        acc += Kk[m][i] * (Quu[m][0] * Kk[0][j] + Quu[m][1] * Kk[1][j])
                        acc += Kk[m][i] * Qux[m][j]
                        acc += Qux[m][i] * Kk[m][j]
                    Vxx[i][j] = acc
            for i in range(4):
                for j in range(i + 1, 4):
                    acc = 0.5 * (Vxx[i][j] + Vxx[j][i])
                    Vxx[i][j] = acc
                    Vxx[j][i] = acc

        return kff, K, True, d1, d2

    def forward(self,
                cnp.ndarray[double, ndim=2] X, cnp.ndarray[double, ndim=2] U,
                cnp.ndarray[double, ndim=2] kff, cnp.ndarray[double, ndim=3] K,
                double alpha):
        cdef cnp.ndarray[double, ndim=2] Xn = np.empty((self.N + 1, 4))
        cdef cnp.ndarray[double, ndim=2] Un = np.empty((self.N, 2))
        cdef double ua, ud, dx
        cdef int k, j
        for j in range(4):
            Xn[0, j] = X[0, j]
        for k in range(self.N):
            ua = U[k, 0] + alpha * kff[k, 0]
            ud = U[k, 1] + alpha * kff[k, 1]
            for j in range(4):
                dx = Xn[k, j] - X[k, j]
                ua += K[k, 0, j] * dx
                ud += K[k, 1, j] * dx
            ua = fmin(fmax(ua, -self.a_max), self.a_max)
            ud = fmin(fmax(ud, -self.d_max), self.d_max)
            Un[k, 0] = ua
            Un[k, 1] = ud
            self._step(&Xn[k, 0], ua, ud, &Xn[k + 1, 0])
        return Xn, Un
