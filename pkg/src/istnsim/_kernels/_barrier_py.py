"""Pure-numpy log-barrier solver for block-structured convex QCQPs.

Reference implementation of the compiled kernel in ``_barrier.pyx``; both
must agree to rounding.  Problem data layout (shared by both backends):

``sizes``  block sizes, ``n = sizes.sum()``
``P``      ``(m + 1, sum(sizes**2))`` packed row-major symmetric blocks,
           row 0 is the objective, rows 1..m the constraints
``c``      ``(m + 1, n)`` linear terms
``r``      ``(m + 1,)`` constants

Quadratic ``k`` evaluates to ``x @ P_k @ x + c_k @ x + r_k``.  Constraints
read ``g_k(x) <= 0``.  In phase-1 mode the objective row is ignored, an
epigraph scalar ``t`` is appended and constraint ``k`` becomes
``g_k(x) - scale_k * t <= 0`` (``scale_k == 0`` keeps it hard).
"""

import numpy as np

CONVERGED = 0
STOPPED_EARLY = 1
MAX_ITER = 2
BAD_START = 3
NUMERICAL = 4

_MU = 20.0
_NEWTON_TOL = 1e-10
_ROUNDOFF_TOL = 1e-6
_ALPHA = 0.25
_BETA = 0.5
_RIDGE = 1e-12
_MIN_STEP = 1e-4


class _Blocks:
    def __init__(self, sizes):
        self.sizes = np.asarray(sizes, dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        self.poffsets = np.concatenate([[0], np.cumsum(self.sizes ** 2)])

    def mats(self, row):
        for b, nb in enumerate(self.sizes):
            p0 = self.poffsets[b]
            yield b, self.offsets[b], nb, row[p0:p0 + nb * nb].reshape(nb, nb)


def _quad_values(blk, P, c, r, x):
    """Values and gradients of every quadratic row at ``x``."""
    nq = P.shape[0]
    vals = c @ x + r
    grads = c.copy()
    for k in range(nq):
        for _, o, nb, A in blk.mats(P[k]):
            xb = x[o:o + nb]
            Ax = A @ xb
            vals[k] += xb @ Ax
            grads[k, o:o + nb] += 2.0 * Ax
    return vals, grads


def _cholesky(B):
    try:
        return np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        pass
    ridge = _RIDGE * (1.0 + np.trace(B) / B.shape[0])
    try:
        return np.linalg.cholesky(B + ridge * np.eye(B.shape[0]))
    except np.linalg.LinAlgError:
        return None


def _newton_direction(blk, P, wdiag, grads, rhs, tau, phase1, scale):
    """Solve ``H dz = rhs`` where ``H`` is block diagonal plus low rank.

    ``wdiag`` holds ``1/d_k`` for the constraints.  In phase 1 the last entry
    of ``rhs``/``dz`` is the epigraph variable.
    """
    m = grads.shape[0] - 1
    n = blk.offsets[-1]
    U = grads[1:].T  # n x m
    W = wdiag ** 2
    chol = []
    for b, o, nb, _ in blk.mats(P[0]):
        p0 = blk.poffsets[b]
        B = (2.0 * wdiag) @ P[1:, p0:p0 + nb * nb]
        if not phase1:
            B = B + 2.0 * tau * P[0, p0:p0 + nb * nb]
        B = B.reshape(nb, nb)
        L = _cholesky(B)
        if L is None:
            return None
        chol.append((o, nb, L))

    def binv(V):
        out = np.empty_like(V)
        for o, nb, L in chol:
            y = np.linalg.solve(L, V[o:o + nb])
            out[o:o + nb] = np.linalg.solve(L.T, y)
        return out

    BU = binv(U)
    S = U.T @ BU
    S[np.diag_indices_from(S)] += 1.0 / W
    try:
        Sc = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return None

    def ainv(V):
        BV = binv(V)
        y = np.linalg.solve(Sc, U.T @ BV)
        return BV - BU @ np.linalg.solve(Sc.T, y)

    if not phase1:
        return ainv(rhs[:, None])[:, 0]

    ws = W * scale
    v = U @ ws
    sol = ainv(np.column_stack([rhs[:n], v]))
    schur = ws @ scale - v @ sol[:, 1]
    if not schur > 0.0:
        return None
    dt = (rhs[n] + v @ sol[:, 0]) / schur
    dx = sol[:, 0] + sol[:, 1] * dt
    return np.concatenate([dx, [dt]])


def _initial_tau(grads, g, phase1, scale, f0):
    # least-squares fit of tau * grad f0 to minus the barrier gradient
    m = g.shape[0]
    if m == 0:
        return 1.0
    wdiag = -1.0 / g
    gb = (grads[1:] * wdiag[:, None]).sum(axis=0)
    if phase1:
        num = wdiag @ scale
        den = 1.0
    else:
        num = -(grads[0] @ gb)
        den = grads[0] @ grads[0]
    tau = num / den if den > 0.0 else 0.0
    if not tau > 0.0:
        tau = m / max(abs(f0), 1.0)
    return min(max(tau, 1e-8), 1e8)


def barrier_solve(sizes, P, c, r, scale, x0, t0, phase1, gap_tol, t_stop,
                  max_newton):
    """Run the barrier method.  Returns ``(x, t, lam, iters, status)``."""
    blk = _Blocks(sizes)
    P = np.ascontiguousarray(P, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    r = np.ascontiguousarray(r, dtype=float)
    scale = np.asarray(scale, dtype=float)
    m = P.shape[0] - 1
    x = np.array(x0, dtype=float)
    t = float(t0)

    def evaluate(x, t):
        vals, grads = _quad_values(blk, P, c, r, x)
        g = vals[1:] - scale * t if phase1 else vals[1:]
        return vals, grads, g

    vals, grads, g = evaluate(x, t)
    if np.any(g >= 0.0):
        return x, t, np.zeros(m), 0, BAD_START
    tau = _initial_tau(grads, g, phase1, scale, t if phase1 else vals[0])
    iters = 0
    status = MAX_ITER

    def phi(vals, g, t):
        f = t if phase1 else vals[0]
        return tau * f - np.sum(np.log(-g))

    while True:
        for _ in range(100):
            d = -g
            wdiag = 1.0 / d
            gx = (grads[1:] * wdiag[:, None]).sum(axis=0)
            if phase1:
                grad = np.concatenate([gx, [tau - wdiag @ scale]])
            else:
                grad = tau * grads[0] + gx
            dz = _newton_direction(blk, P, wdiag, grads, -grad, tau, phase1,
                                   scale)
            if dz is None:
                return x, t, wdiag / tau, iters, NUMERICAL
            dec = -grad @ dz
            if dec * 0.5 <= _NEWTON_TOL:
                break
            iters += 1
            if iters > max_newton:
                return x, t, wdiag / tau, iters, MAX_ITER
            phi0 = phi(vals, g, t)
            step = 1.0
            dx = dz[:len(x)]
            dt = dz[-1] if phase1 else 0.0
            accepted = False
            for _ in range(80):
                xn = x + step * dx
                tn = t + step * dt
                vn, gn_, gn = evaluate(xn, tn)
                if np.all(gn < 0.0) and phi(vn, gn, tn) <= phi0 - _ALPHA * step * dec:
                    accepted = True
                    break
                step *= _BETA
            if not accepted:
                break
            x, t, vals, grads, g = xn, tn, vn, gn_, gn
            # a damped step this close to the center means phi is in roundoff
            if step < 1.0 and dec * 0.5 <= _ROUNDOFF_TOL:
                break
            # exact Newton steps are never this short; the direction is roundoff
            if step < _MIN_STEP:
                break
            if phase1 and t < t_stop:
                return x, t, 1.0 / (tau * -g), iters, STOPPED_EARLY
        if m / tau < gap_tol:
            status = CONVERGED
            break
        tau *= _MU
    return x, t, 1.0 / (tau * -g), iters, status
