"""Convex QCQP solver front end and capped water-filling.

Complex blocks are lifted to real ones, ``z = [Re x; Im x]``; a Hermitian
form ``x^H A x`` becomes ``z^T [[Re A, -Im A], [Im A, Re A]] z`` and the
linear term ``-2 Re(b^H x)`` becomes ``-2 [Re b; Im b]^T z``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, nnls

from . import _kernels

_GAP_REL = 1e-10
_MAX_NEWTON = 400
_MARGIN = 1e-7


@dataclass
class QcqpProblem:
    """Real block-separable QCQP: row 0 objective, rows 1..m constraints ``<= 0``.

    ``scale`` weights each constraint's violation in the phase-1 problem
    (0 keeps a constraint hard).
    """
    sizes: np.ndarray
    P: np.ndarray
    c: np.ndarray
    r: np.ndarray
    scale: np.ndarray
    names: tuple = ()

    @property
    def n(self):
        return int(np.sum(self.sizes))

    @property
    def m(self):
        return self.P.shape[0] - 1

    def blocks(self, row):
        off = 0
        poff = 0
        for nb in self.sizes:
            yield off, nb, self.P[row, poff:poff + nb * nb].reshape(nb, nb)
            off += nb
            poff += nb * nb

    def _stacks(self):
        off = 0
        poff = 0
        for nb in self.sizes:
            yield off, nb, self.P[:, poff:poff + nb * nb].reshape(-1, nb, nb)
            off += nb
            poff += nb * nb

    def values(self, x):
        v = self.c @ x + self.r
        for off, nb, A in self._stacks():
            xb = x[off:off + nb]
            v += (A @ xb) @ xb
        return v

    def gradients(self, x):
        g = self.c.copy()
        for off, nb, A in self._stacks():
            g[:, off:off + nb] += 2.0 * (A @ x[off:off + nb])
        return g

    def min_eigenvalue(self):
        lo = np.inf
        for k in range(self.m + 1):
            for _, _, A in self.blocks(k):
                lo = min(lo, np.linalg.eigvalsh(A)[0] / max(1.0, np.abs(A).max()))
        return lo


class QcqpBuilder:
    """Assemble a QcqpProblem from complex (``"c"``) and real (``"r"``) blocks."""

    def __init__(self, blocks, n_constraints):
        self.kinds = [k for k, _ in blocks]
        self.dims = [d for _, d in blocks]
        self.sizes = np.array([2 * d if k == "c" else d for k, d in blocks], dtype=np.int64)
        self.off = np.concatenate([[0], np.cumsum(self.sizes)])
        self.poff = np.concatenate([[0], np.cumsum(self.sizes ** 2)])
        rows = n_constraints + 1
        self.P = np.zeros((rows, int(self.poff[-1])))
        self.c = np.zeros((rows, int(self.off[-1])))
        self.r = np.zeros(rows)

    def _pview(self, row, b):
        nb = self.sizes[b]
        return self.P[row, self.poff[b]:self.poff[b + 1]].reshape(nb, nb)

    def add_quad(self, row, b, A):
        """``x_b^H A x_b`` with ``A`` Hermitian PSD (or real symmetric)."""
        view = self._pview(row, b)
        if self.kinds[b] == "c":
            d = self.dims[b]
            ar, ai = A.real, A.imag
            view[:d, :d] += ar
            view[d:, d:] += ar
            view[:d, d:] -= ai
            view[d:, :d] += ai
        else:
            view += np.real(A)

    def add_quad_all(self, row, A, blocks):
        for b in blocks:
            self.add_quad(row, b, A)

    def add_linear(self, row, b, vec):
        """``-2 Re(vec^H x_b)``."""
        seg = self.c[row, self.off[b]:self.off[b + 1]]
        if self.kinds[b] == "c":
            d = self.dims[b]
            seg[:d] -= 2.0 * vec.real
            seg[d:] -= 2.0 * vec.imag
        else:
            seg -= 2.0 * np.real(vec)

    def add_const(self, row, v):
        self.r[row] += v

    def pack(self, xs):
        """Stack complex/real block values into the real vector."""
        parts = []
        for kind, v in zip(self.kinds, xs):
            v = np.atleast_1d(v)
            parts.append(np.concatenate([v.real, v.imag]) if kind == "c" else np.real(v))
        return np.concatenate(parts).astype(float)

    def unpack(self, z):
        out = []
        for b, kind in enumerate(self.kinds):
            seg = z[self.off[b]:self.off[b + 1]]
            if kind == "c":
                d = self.dims[b]
                out.append(seg[:d] + 1j * seg[d:])
            else:
                out.append(seg.copy())
        return out

    def build(self, scale, names=()):
        return QcqpProblem(sizes=self.sizes.copy(), P=self.P.copy(), c=self.c.copy(),
                           r=self.r.copy(), scale=np.asarray(scale, dtype=float),
                           names=tuple(names))


@dataclass
class QcqpResult:
    x: np.ndarray
    lam: np.ndarray
    status: str  # optimal | infeasible | inaccurate
    objective: float
    kkt: dict = field(default_factory=dict)
    violation: float = 0.0
    newton: int = 0


def _kernel(prob, x0, t0, phase1, gap_tol, t_stop):
    return _kernels.barrier_solve(prob.sizes, prob.P, prob.c, prob.r, prob.scale,
                                  np.ascontiguousarray(x0, dtype=float), float(t0),
                                  bool(phase1), float(gap_tol), float(t_stop), _MAX_NEWTON)


def soft_scale(prob):
    """Phase-1 weights with the hard rows weighted by their own bound."""
    sc = prob.scale.copy()
    hard = sc <= 0
    sc[hard] = np.maximum(-prob.r[1:][hard], 1.0)
    return sc


def phase1(prob, x0, t_stop=-np.inf, gap_tol=1e-10, soften=False, t_pad=1.0):
    """Minimise the largest scaled violation ``max_k g_k / scale_k``.

    Returns ``(x, t, newton_steps)``; ``t < 0`` certifies strict feasibility.
    Unless ``soften`` is set, constraints with zero scale must hold strictly
    at ``x0`` and stay hard.
    """
    x0 = np.asarray(x0, dtype=float)
    scale = soft_scale(prob) if soften else prob.scale
    g = prob.values(x0)[1:]
    soft = scale > 0
    if np.any(g[~soft] >= 0):
        raise ValueError("hard constraints violated at the phase-1 start")
    if soft.any():
        t_max = np.max(g[soft] / scale[soft])
        # far from feasibility a tight epigraph start stalls the Newton steps
        t0 = t_max + max(t_pad, 0.1 * abs(t_max))
    else:
        t0 = 0.0
    x, t, _, it, status = _kernels.barrier_solve(
        prob.sizes, prob.P, prob.c, prob.r, scale, np.ascontiguousarray(x0), float(t0),
        True, float(gap_tol), float(t_stop), _MAX_NEWTON)
    if status in (_kernels.BAD_START, _kernels.NUMERICAL) and it == 0:
        return x0, t0, it
    return x, t, it


def kkt_residuals(prob, x, lam):
    v = prob.values(x)
    G = prob.gradients(x)
    g = v[1:]
    stat = G[0] + lam @ G[1:]
    return {
        "stationarity": float(np.max(np.abs(stat)) / max(1.0, np.max(np.abs(G[0])))),
        "primal": float(max(0.0, np.max(g))) if g.size else 0.0,
        "complementarity": float(np.max(np.abs(lam * g))) if g.size else 0.0,
    }


def polish_duals(prob, x, lam, active_tol=1e-7):
    """Re-fit the multipliers of the nearly active constraints by NNLS.

    The barrier estimate ``1 / (tau * -g)`` is sensitive to centring error on
    constraints that sit within roundoff of their bound.
    """
    g = prob.values(x)[1:]
    G = prob.gradients(x)
    act = np.flatnonzero(g > -active_tol * np.maximum(1.0, prob.scale))
    out = np.zeros_like(lam)
    if act.size:
        norms = np.maximum(np.linalg.norm(G[1 + act], axis=1), 1e-300)
        sol, _ = nnls((G[1 + act] / norms[:, None]).T, -G[0])
        out[act] = sol / norms
    base = kkt_residuals(prob, x, lam)
    new = kkt_residuals(prob, x, out)
    return (out, new) if max(new.values()) < max(base.values()) else (lam, base)


def solve_qcqp(prob, x0=None, tol=1e-6):
    """Barrier solve with a phase-1 start when ``x0`` is not strictly feasible."""
    x = np.zeros(prob.n) if x0 is None else np.asarray(x0, dtype=float)
    newton = 0
    g = prob.values(x)[1:]
    if prob.m and np.max(g / soft_scale(prob)) >= -_MARGIN:
        # warm starts usually sit on the boundary; step just inside it
        x, t, newton = phase1(prob, x, t_stop=-1e-4, soften=True, t_pad=1e-3)
        if not t < -1e-12:
            return QcqpResult(x=x, lam=np.zeros(prob.m), status="infeasible",
                              objective=float(prob.values(x)[0]),
                              violation=float(max(t, 0.0)), newton=newton)
    f0 = prob.values(x)[0]
    gap = _GAP_REL * max(1.0, abs(f0))
    x, _, lam, it, status = _kernel(prob, x, 0.0, False, gap, -np.inf)
    newton += it
    lam, kkt = polish_duals(prob, x, lam)
    ok = status == _kernels.CONVERGED and max(kkt.values()) <= tol
    return QcqpResult(x=x, lam=lam, status="optimal" if ok else "inaccurate",
                      objective=float(prob.values(x)[0]), kkt=kkt, newton=newton)


def water_fill(gains, total, caps=None, floors=None):
    """Maximise ``sum log(1 + gains * p)`` s.t. ``sum p <= total`` and
    ``floors <= p <= caps``; floors are dropped when they exceed the budget."""
    a = np.asarray(gains, dtype=float)
    caps = np.full(a.shape, np.inf) if caps is None else np.asarray(caps, dtype=float)
    lo = np.zeros(a.shape) if floors is None else np.minimum(np.asarray(floors, float), caps)
    live = a > 0
    lo = np.where(live, np.maximum(lo, 0.0), 0.0)
    if total <= 0 or not live.any():
        return np.zeros_like(a)
    if np.sum(lo) > total:
        lo = np.zeros_like(a)
    inv = np.where(live, 1.0 / np.where(live, a, 1.0), np.inf)

    def alloc(level):
        return np.where(live, np.clip(level - inv, lo, caps), 0.0)

    full = np.where(live, caps, 0.0)
    if np.sum(full) <= total:
        return full
    hi = np.max(inv[live]) + 2.0 * total  # strictly above the level
    level = brentq(lambda lv: np.sum(alloc(lv)) - total, 0.0, hi, xtol=1e-15, rtol=1e-15)
    p = alloc(level)
    # remove the bisection residue so the budget holds exactly
    if np.sum(p) > total:
        free = p - lo
        p = lo + free * (total - np.sum(lo)) / np.sum(free)
    return p


@dataclass
class MergeProblem:
    p_bar: np.ndarray
    g_sut: np.ndarray
    denom: np.ndarray
    P_LEO: float
    p_min: np.ndarray = None  # per-beam floors, e.g. the SUT rate requirement


def solve_merge(prob):
    """Sum SUT rate maximisation under the beam caps and the satellite budget."""
    p_bar = np.maximum(np.asarray(prob.p_bar, dtype=float), 0.0)
    gains = np.asarray(prob.g_sut, dtype=float) / np.asarray(prob.denom, dtype=float)
    return water_fill(gains, prob.P_LEO, caps=p_bar, floors=prob.p_min)
