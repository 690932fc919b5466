# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled log-barrier solver; mirrors ``_barrier_py.barrier_solve``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log
from scipy.linalg.cython_blas cimport daxpy, ddot, dsymv
from scipy.linalg.cython_lapack cimport dpotrf, dpotrs

cnp.import_array()

cdef int CONVERGED = 0
cdef int STOPPED_EARLY = 1
cdef int MAX_ITER = 2
cdef int BAD_START = 3
cdef int NUMERICAL = 4

cdef double _MU = 20.0
cdef double _NEWTON_TOL = 1e-10
cdef double _ALPHA = 0.25
cdef double _BETA = 0.5
cdef double _RIDGE = 1e-12
cdef double _ROUNDOFF_TOL = 1e-6
cdef double _MIN_STEP = 1e-4


cdef int _chol(double* A, int n) noexcept nogil:
    """In-place Cholesky of a symmetric n x n block; nonzero on failure."""
    cdef char uplo = b'L'
    cdef int info = 0
    if n == 0:
        return 0
    dpotrf(&uplo, &n, A, &n, &info)
    return info


cdef void _chol_solve(double* L, int n, double* v, int nrhs, int ldv) noexcept nogil:
    """Overwrite the ``nrhs`` vectors at ``v`` (stride ``ldv``) with (L L^T)^{-1} v."""
    cdef char uplo = b'L'
    cdef int info = 0
    if n == 0 or nrhs == 0:
        return
    dpotrs(&uplo, &n, &nrhs, L, &n, v, &ldv, &info)


cdef class _Work:
    cdef int nblk, n, m, nq, maxb, npk
    cdef long[::1] sizes
    cdef long[::1] off
    cdef long[::1] poff
    cdef double[:, ::1] P
    cdef double[:, ::1] c
    cdef double[::1] r
    cdef double[::1] scale
    cdef bint phase1
    cdef double[::1] Bp           # packed Hessian blocks, factored in place
    cdef double[:, ::1] BUt        # (B^{-1} U)^T, m x n
    cdef double[:, ::1] S          # m x m
    cdef double[::1] ax
    cdef double[::1] tm
    cdef double[::1] vbuf
    cdef double[::1] sol1

    def __init__(self, sizes, P, c, r, scale, bint phase1):
        self.sizes = np.ascontiguousarray(sizes, dtype=np.int_)
        self.nblk = self.sizes.shape[0]
        self.off = np.ascontiguousarray(
            np.concatenate([[0], np.cumsum(sizes)]), dtype=np.int_)
        self.poff = np.ascontiguousarray(
            np.concatenate([[0], np.cumsum(np.asarray(sizes) ** 2)]), dtype=np.int_)
        self.P = np.ascontiguousarray(P, dtype=np.float64)
        self.c = np.ascontiguousarray(c, dtype=np.float64)
        self.r = np.ascontiguousarray(r, dtype=np.float64)
        self.scale = np.ascontiguousarray(scale, dtype=np.float64)
        self.nq = self.P.shape[0]
        self.m = self.nq - 1
        self.n = self.off[self.nblk]
        self.npk = self.poff[self.nblk]
        self.maxb = max(sizes) if len(sizes) else 1
        self.phase1 = phase1
        self.Bp = np.zeros(max(self.npk, 1))
        self.BUt = np.zeros((max(self.m, 1), max(self.n, 1)))
        self.S = np.zeros((max(self.m, 1), max(self.m, 1)))
        self.ax = np.zeros(self.maxb + 1)
        self.tm = np.zeros(max(self.m, 1))
        self.vbuf = np.zeros(self.n + 1)
        self.sol1 = np.zeros(self.n + 1)

    cdef void evaluate(self, double[::1] x, double t, double[::1] vals,
                       double[:, ::1] grads, double[::1] g, bint want_grad) noexcept nogil:
        cdef int k, b, i, o, nb, p0, one = 1
        cdef double acc, alpha = 1.0, beta = 0.0
        cdef char uplo = b'U'
        for k in range(self.nq):
            acc = self.r[k] + ddot(&self.n, &self.c[k, 0], &one, &x[0], &one)
            if want_grad:
                for i in range(self.n):
                    grads[k, i] = self.c[k, i]
            for b in range(self.nblk):
                o = self.off[b]
                nb = self.sizes[b]
                p0 = self.poff[b]
                dsymv(&uplo, &nb, &alpha, &self.P[k, p0], &nb, &x[o], &one,
                      &beta, &self.ax[0], &one)
                acc += ddot(&nb, &x[o], &one, &self.ax[0], &one)
                if want_grad:
                    for i in range(nb):
                        grads[k, o + i] += 2.0 * self.ax[i]
            vals[k] = acc
        for k in range(self.m):
            if self.phase1:
                g[k] = vals[k + 1] - self.scale[k] * t
            else:
                g[k] = vals[k + 1]

    cdef void assemble(self, double[::1] wdiag, double tau) noexcept nogil:
        cdef int k, one = 1
        cdef double a
        if self.phase1:
            for k in range(self.npk):
                self.Bp[k] = 0.0
        else:
            a = 2.0 * tau
            for k in range(self.npk):
                self.Bp[k] = a * self.P[0, k]
        for k in range(self.m):
            a = 2.0 * wdiag[k]
            daxpy(&self.npk, &a, &self.P[k + 1, 0], &one, &self.Bp[0], &one)

    cdef int factor(self, double[::1] wdiag, double tau) noexcept nogil:
        cdef int b, i, nb, p0
        cdef double tr, ridge
        self.assemble(wdiag, tau)
        for b in range(self.nblk):
            nb = self.sizes[b]
            p0 = self.poff[b]
            tr = 0.0
            for i in range(nb):
                tr += self.Bp[p0 + i * nb + i]
            if _chol(&self.Bp[p0], nb):
                ridge = _RIDGE * (1.0 + tr / nb)
                # rebuild this block, the failed factorization clobbered it
                self._rebuild_block(wdiag, tau, b)
                for i in range(nb):
                    self.Bp[p0 + i * nb + i] += ridge
                if _chol(&self.Bp[p0], nb):
                    return 1
        return 0

    cdef void _rebuild_block(self, double[::1] wdiag, double tau, int b) noexcept nogil:
        cdef int k, j, nb = self.sizes[b], p0 = self.poff[b]
        cdef double w
        for j in range(nb * nb):
            w = 0.0 if self.phase1 else 2.0 * tau * self.P[0, p0 + j]
            for k in range(self.m):
                w += 2.0 * wdiag[k] * self.P[k + 1, p0 + j]
            self.Bp[p0 + j] = w

    cdef void binv(self, double* v, int nrhs, int ldv) noexcept nogil:
        cdef int b
        for b in range(self.nblk):
            _chol_solve(&self.Bp[self.poff[b]], self.sizes[b], v + self.off[b], nrhs, ldv)

    cdef int direction(self, double[::1] wdiag, double[:, ::1] grads,
                       double[::1] rhs, double tau, double[::1] dz) noexcept nogil:
        """Solve H dz = rhs.  Mirrors the numpy fallback."""
        cdef int i, j, k, n = self.n, m = self.m, one = 1
        cdef double s, schur, dt, vt
        if self.factor(wdiag, tau):
            return 1
        if m > 0:
            for k in range(m):
                for i in range(n):
                    self.BUt[k, i] = grads[k + 1, i]
            self.binv(&self.BUt[0, 0], m, n)
            for k in range(m):
                for j in range(k, m):
                    s = ddot(&n, &grads[k + 1, 0], &one, &self.BUt[j, 0], &one)
                    self.S[k, j] = s
                    self.S[j, k] = s
                self.S[k, k] += (1.0 / wdiag[k]) * (1.0 / wdiag[k])
            if _chol(&self.S[0, 0], m):
                return 1
        self.ainv(rhs, dz)
        if not self.phase1:
            return 0
        # v = U (W scale), sol1 = A^{-1} v
        for i in range(n):
            s = 0.0
            for k in range(m):
                s += grads[k + 1, i] * wdiag[k] * wdiag[k] * self.scale[k]
            self.vbuf[i] = s
        self.ainv(self.vbuf, self.sol1)
        schur = 0.0
        for k in range(m):
            schur += wdiag[k] * wdiag[k] * self.scale[k] * self.scale[k]
        vt = 0.0
        for i in range(n):
            schur -= self.vbuf[i] * self.sol1[i]
            vt += self.vbuf[i] * dz[i]
        if not schur > 0.0:
            return 1
        dt = (rhs[n] + vt) / schur
        for i in range(n):
            dz[i] += self.sol1[i] * dt
        dz[n] = dt
        return 0

    cdef void ainv(self, double[::1] rhs, double[::1] out) noexcept nogil:
        cdef int i, k, n = self.n, m = self.m, one = 1
        for i in range(n):
            out[i] = rhs[i]
        self.binv(&out[0], 1, n)
        if m == 0:
            return
        for k in range(m):
            self.tm[k] = ddot(&n, &self.BUt[k, 0], &one, &rhs[0], &one)
        _chol_solve(&self.S[0, 0], m, &self.tm[0], 1, m)
        for k in range(m):
            for i in range(n):
                out[i] -= self.BUt[k, i] * self.tm[k]


cdef double _phi(bint phase1, double tau, double[::1] vals, double[::1] g,
                 double t, Py_ssize_t m) noexcept nogil:
    cdef double f = t if phase1 else vals[0]
    cdef double s = tau * f
    cdef Py_ssize_t k
    for k in range(m):
        s -= log(-g[k])
    return s


def barrier_solve(sizes, P, c, r, scale, x0, double t0, bint phase1,
                  double gap_tol, double t_stop, int max_newton):
    """Run the barrier method.  Returns ``(x, t, lam, iters, status)``."""
    cdef _Work w = _Work(sizes, P, c, r, scale, phase1)
    cdef Py_ssize_t n = w.n, m = w.m, nq = w.nq, nz = w.n + (1 if phase1 else 0)
    cdef Py_ssize_t i, k, it, ls
    cdef double[::1] x = np.array(x0, dtype=np.float64)
    cdef double t = t0
    cdef double[::1] xn = np.zeros(n)
    cdef double tn
    cdef double[::1] vals = np.zeros(nq)
    cdef double[::1] vn = np.zeros(nq)
    cdef double[:, ::1] grads = np.zeros((nq, n))
    cdef double[:, ::1] gradsn = np.zeros((nq, n))
    cdef double[::1] g = np.zeros(max(m, 1))
    cdef double[::1] gn = np.zeros(max(m, 1))
    cdef double[::1] wdiag = np.zeros(max(m, 1))
    cdef double[::1] grad = np.zeros(nz + 1)
    cdef double[::1] rhs = np.zeros(nz + 1)
    cdef double[::1] dz = np.zeros(nz + 1)
    cdef double tau, f0, dec, phi0, step, s, num, den
    cdef int iters = 0, status = MAX_ITER
    cdef bint ok, accepted
    cdef double[::1] swap1

    w.evaluate(x, t, vals, grads, g, True)
    for k in range(m):
        if g[k] >= 0.0:
            return np.asarray(x), t, np.zeros(m), 0, BAD_START
    f0 = t if phase1 else vals[0]
    tau = 1.0
    if m > 0:
        num = 0.0
        den = 0.0
        if phase1:
            for k in range(m):
                num -= w.scale[k] / g[k]
            den = 1.0
        else:
            for i in range(n):
                s = 0.0
                for k in range(m):
                    s -= grads[k + 1, i] / g[k]
                num -= grads[0, i] * s
                den += grads[0, i] * grads[0, i]
        tau = num / den if den > 0.0 else 0.0
        if not tau > 0.0:
            tau = m / max(abs(f0), 1.0)
        tau = min(max(tau, 1e-8), 1e8)

    while True:
        for it in range(100):
            for k in range(m):
                wdiag[k] = -1.0 / g[k]
            for i in range(n):
                s = 0.0
                for k in range(m):
                    s += grads[k + 1, i] * wdiag[k]
                grad[i] = s if phase1 else tau * grads[0, i] + s
            if phase1:
                s = tau
                for k in range(m):
                    s -= wdiag[k] * w.scale[k]
                grad[n] = s
            for i in range(nz):
                rhs[i] = -grad[i]
            if w.direction(wdiag, grads, rhs, tau, dz):
                return (np.asarray(x).copy(), t,
                        np.asarray(wdiag[:m]).copy() / tau, iters, NUMERICAL)
            dec = 0.0
            for i in range(nz):
                dec -= grad[i] * dz[i]
            if dec * 0.5 <= _NEWTON_TOL:
                break
            iters += 1
            if iters > max_newton:
                return (np.asarray(x).copy(), t,
                        np.asarray(wdiag[:m]).copy() / tau, iters, MAX_ITER)
            phi0 = _phi(phase1, tau, vals, g, t, m)
            step = 1.0
            accepted = False
            for ls in range(80):
                for i in range(n):
                    xn[i] = x[i] + step * dz[i]
                tn = t + step * dz[n] if phase1 else t
                w.evaluate(xn, tn, vn, gradsn, gn, False)
                ok = True
                for k in range(m):
                    if not gn[k] < 0.0:
                        ok = False
                        break
                if ok and _phi(phase1, tau, vn, gn, tn, m) <= phi0 - _ALPHA * step * dec:
                    accepted = True
                    break
                step *= _BETA
            if not accepted:
                break
            swap1 = x; x = xn; xn = swap1
            t = tn
            swap1 = vals; vals = vn; vn = swap1
            swap1 = g; g = gn; gn = swap1
            w.evaluate(x, t, vals, grads, g, True)
            if phase1 and t < t_stop:
                lam = np.array([-1.0 / (tau * g[k]) for k in range(m)])
                return np.asarray(x).copy(), t, lam, iters, STOPPED_EARLY
            if step < 1.0 and dec * 0.5 <= _ROUNDOFF_TOL:
                break
            if step < _MIN_STEP:
                break
        if m / tau < gap_tol:
            status = CONVERGED
            break
        tau *= _MU
    lam = np.array([-1.0 / (tau * g[k]) for k in range(m)])
    return np.asarray(x).copy(), t, lam, iters, status
