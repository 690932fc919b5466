"""QoS-constrained WMMSE for one cell.

The transmitter step is a convex QCQP in the beamformer columns and the
satellite amplitude ``q = sqrt(p_sat)``.  Sensing and SUT requirements enter
as maximum-MSE constraints: ``eps_sut <= 2^-R_min`` and
``eps_i <= 1 / (1 + SCNR_min)``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import metrics
from .convex import QcqpBuilder, phase1, solve_qcqp
from .metrics import _rx

P1 = "P1"
P3 = "P3"

_STALL = 1e-6
_RESTORE_ITERS = 60


@dataclass
class Weights:
    tut: np.ndarray
    sut: float
    tar: np.ndarray


@dataclass
class WmmseState:
    F: np.ndarray
    q: float
    filters: metrics.ReceiveFilters = None
    weights: Weights = None
    objective: list = field(default_factory=list)
    iterations: int = 0

    @property
    def p_sat(self):
        return float(self.q ** 2)


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    objective: float
    trajectory: list
    sut_slack: float          # achieved SUT rate minus R_min (bps/Hz)
    scnr_slack: np.ndarray    # achieved SCNR minus SCNR_min (dB)
    power_slack: float        # P_BS minus transmit power (W)
    infeasible: bool = False
    violated: tuple = ()
    newton: int = 0

    @property
    def residuals(self):
        s = [self.sut_slack, self.power_slack]
        return np.concatenate([s, self.scnr_slack])


def mse_bounds(params):
    """``(eps_sut_max, eps_tar_max)`` equivalent to the rate and SCNR floors."""
    return 2.0 ** (-params.R_min_S), 1.0 / (1.0 + params.scnr_min_lin)


def initial_beamformer(ch, assoc, power, rng=None):
    """Matched-filter columns with equal power; ``rng`` randomises the phases."""
    rx = _rx(assoc)
    cols = []
    for k in range(ch.K):
        cols.append(ch.H[k].conj())
    for i in range(ch.n_tar):
        _, _, vh = np.linalg.svd(ch.G_tar[i, rx[i]])
        cols.append(vh[0].conj())
    F = np.array(cols, dtype=complex).T.reshape(ch.n_tx, len(cols))
    if rng is not None:
        F = F + 0.5 * np.linalg.norm(F, axis=0) / np.sqrt(ch.n_tx) * (
            rng.normal(size=F.shape) + 1j * rng.normal(size=F.shape))
    norms = np.linalg.norm(F, axis=0)
    F[:, norms == 0] = 1.0
    norms = np.linalg.norm(F, axis=0)
    return F / norms * np.sqrt(power / max(F.shape[1], 1))


def receiver_update(state, ch, assoc):
    return metrics.mmse_filters(state.F, ch, assoc, state.p_sat)


def link_mses(F, q, filters, ch, assoc):
    p = q ** 2
    e_tut = np.array([metrics.mse_tut(F, filters.w_tut[k], ch, p, k) for k in range(ch.K)])
    e_sut = float(metrics.mse_sut(F, filters.w_sut, ch, p))
    e_tar = np.array([metrics.mse_target(F, filters.w_tar[i], ch, assoc, p, i)
                      for i in range(ch.n_tar)])
    return e_tut, e_sut, e_tar


def weight_update(state, ch, assoc):
    e_tut, e_sut, e_tar = link_mses(state.F, state.q, state.filters, ch, assoc)
    e = np.concatenate([e_tut, [e_sut], e_tar])
    assert np.all(e > 0), "non-positive MSE at the MMSE point"
    return Weights(tut=1.0 / e_tut, sut=1.0 / e_sut, tar=1.0 / e_tar)


def weighted_objective(state, ch, assoc):
    """``sum (mu * eps - ln mu)`` over the communication streams."""
    e_tut, e_sut, _ = link_mses(state.F, state.q, state.filters, ch, assoc)
    w = state.weights
    return float(np.sum(w.tut * e_tut - np.log(w.tut)) + w.sut * e_sut - np.log(w.sut))


def _refresh(state, ch, assoc):
    state.filters = receiver_update(state, ch, assoc)
    state.weights = weight_update(state, ch, assoc)
    return state


class _Layout:
    """Block layout of the lifted variable: one complex block per column, then ``q``."""

    def __init__(self, ch, mode):
        self.C = ch.K + ch.n_tar
        self.joint = mode == P1
        blocks = [("c", ch.n_tx)] * self.C
        if self.joint:
            blocks.append(("r", 1))
        # rows: SUT, targets, power, (satellite cap)
        self.n_con = 1 + ch.n_tar + 1 + int(self.joint)
        self.builder = QcqpBuilder(blocks, self.n_con)
        self.cols = list(range(self.C))
        self.qb = self.C if self.joint else None

    def pack(self, F, q):
        xs = [F[:, c] for c in range(self.C)]
        if self.joint:
            xs.append(np.array([q]))
        return self.builder.pack(xs)

    def unpack(self, z, q_fixed):
        xs = self.builder.unpack(z)
        F = np.array(xs[:self.C]).T
        q = float(xs[self.C][0]) if self.joint else q_fixed
        return F, abs(q)


def build_problem(state, ch, assoc, params, mode, bounds=None):
    """Transmitter-step QCQP for the current filters and weights."""
    lay = _Layout(ch, mode)
    b = lay.builder
    fl, wt = state.filters, state.weights
    rx = _rx(assoc)
    sut_max, tar_max = mse_bounds(params) if bounds is None else bounds
    tar_max = np.broadcast_to(np.asarray(tar_max, dtype=float), (ch.n_tar,))
    q = state.q
    amp = np.sqrt(ch.g_sut)
    hs = np.outer(ch.h_sut.conj(), ch.h_sut)

    # objective
    A = sum(wt.tut[k] * abs(fl.w_tut[k]) ** 2 * np.outer(ch.H[k].conj(), ch.H[k])
            for k in range(ch.K)) + wt.sut * fl.w_sut ** 2 * hs
    b.add_quad_all(0, A, lay.cols)
    for k in range(ch.K):
        b.add_linear(0, k, wt.tut[k] * np.conj(fl.w_tut[k] * ch.H[k]))
    q_obj = np.sum(wt.tut * abs(fl.w_tut) ** 2 * ch.g_tut) + wt.sut * fl.w_sut ** 2 * ch.g_sut
    const = np.sum(wt.tut * (1 + abs(fl.w_tut) ** 2 * ch.noise))
    const += wt.sut * (1 + fl.w_sut ** 2 * ch.noise)
    if lay.joint:
        b.add_quad(0, lay.qb, np.array([[q_obj]]))
        b.add_linear(0, lay.qb, np.array([wt.sut * fl.w_sut * amp]))
    else:
        const += q_obj * q ** 2 - 2 * wt.sut * fl.w_sut * amp * q
    b.add_const(0, const)

    # SUT mean-square error
    row = 1
    b.add_quad_all(row, fl.w_sut ** 2 * hs, lay.cols)
    c = 1 + fl.w_sut ** 2 * ch.noise - sut_max
    if lay.joint:
        b.add_quad(row, lay.qb, np.array([[fl.w_sut ** 2 * ch.g_sut]]))
        b.add_linear(row, lay.qb, np.array([fl.w_sut * amp]))
    else:
        c += fl.w_sut ** 2 * ch.g_sut * q ** 2 - 2 * fl.w_sut * amp * q
    b.add_const(row, c)

    # target mean-square errors
    for i in range(ch.n_tar):
        row = 2 + i
        n = rx[i]
        w = fl.w_tar[i]
        wcl = np.einsum("r,lrt->lt", w, ch.G_cl[:, n])
        A_cl = wcl.conj().T @ wcl
        wt_rows = np.einsum("r,jrt->jt", w, ch.G_tar[:, n])
        wg = wt_rows.sum(axis=0)
        A_other = A_cl + np.outer(wg.conj(), wg)
        A_own = A_cl + wt_rows.conj().T @ wt_rows
        for col in lay.cols:
            b.add_quad(row, col, A_own if col == ch.K + i else A_other)
        b.add_linear(row, ch.K + i, wt_rows[i].conj())
        gq = abs(w @ ch.g_rad_vec[n]) ** 2
        c = 1 + ch.noise * np.sum(abs(w) ** 2) - tar_max[i]
        if lay.joint:
            b.add_quad(row, lay.qb, np.array([[gq]]))
        else:
            c += gq * q ** 2
        b.add_const(row, c)

    # a bound of 1 is met by the MMSE receiver for any F, so the row is vacuous
    vacuous = np.flatnonzero(np.concatenate([[sut_max], tar_max]) >= 1.0) + 1
    b.P[vacuous] = 0.0
    b.c[vacuous] = 0.0
    b.r[vacuous] = -1.0

    # budgets
    row = 2 + ch.n_tar
    b.add_quad_all(row, np.eye(ch.n_tx), lay.cols)
    b.add_const(row, -params.P_BS)
    scale = [sut_max, *tar_max, 0.0]
    names = ["sut", *[f"target{i}" for i in range(ch.n_tar)], "power"]
    if lay.joint:
        b.add_quad(row + 1, lay.qb, np.eye(1))
        b.add_const(row + 1, -params.P_LEO)
        scale.append(0.0)
        names.append("satellite")
    return lay, b.build(scale, names)


def transmitter_update(state, ch, assoc, params, mode, bounds=None):
    """One convex transmitter step; returns ``(F, q, QcqpResult)``."""
    lay, prob = build_problem(state, ch, assoc, params, mode, bounds)
    res = solve_qcqp(prob, x0=lay.pack(state.F, state.q))
    F, q = lay.unpack(res.x, state.q)
    return F, q, res


def _violations(state, ch, assoc, params, bounds):
    _, e_sut, e_tar = link_mses(state.F, state.q, state.filters, ch, assoc)
    sut_max, tar_max = bounds
    return np.concatenate([[e_sut / sut_max - 1], e_tar / tar_max - 1])


def _pull_back(prob, x0, x1, level):
    """Point nearest ``x0`` on the segment to ``x1`` whose largest scaled
    violation is at most ``level``; keeps the streams phase 1 would switch off."""
    soft = prob.scale > 0

    def worst(s):
        g = prob.values(x0 + s * (x1 - x0))[1:]
        return np.max(g[soft] / prob.scale[soft])

    lo, hi = 0.0, 1.0
    if worst(hi) > level:
        return x1
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if worst(mid) <= level:
            hi = mid
        else:
            lo = mid
    return x0 + hi * (x1 - x0)


def restore(state, ch, assoc, params, mode, bounds):
    """Alternate minimum-violation steps and MMSE updates until every MSE
    constraint holds strictly.  Returns ``(state, bounds, violated)``; when the
    iteration stalls the violated bounds are relaxed to the reachable values."""
    sut_max, tar_max = bounds
    tar_max = np.broadcast_to(np.asarray(tar_max, float), (ch.n_tar,)).copy()
    bounds = (sut_max, tar_max)
    best = np.inf
    newton = 0
    for _ in range(_RESTORE_ITERS):
        v = _violations(state, ch, assoc, params, bounds)
        worst = float(np.max(v)) if v.size else -1.0
        if worst < -1e-9:
            return state, bounds, (), newton
        if worst > best - _STALL * max(1.0, abs(best)):
            break
        best = worst
        lay, prob = build_problem(state, ch, assoc, params, mode, bounds)
        x0 = lay.pack(state.F, state.q)
        x, t, it = phase1(prob, x0, t_stop=-1e-3)
        newton += it
        if t < 0:
            x = _pull_back(prob, x0, x, -min(1e-3, -t / 2))
        else:
            # filters are poor; take half the reachable reduction, then refresh them
            w0 = np.max(prob.values(x0)[1:][prob.scale > 0] / prob.scale[prob.scale > 0])
            x = _pull_back(prob, x0, x, 0.5 * (w0 + t))
        state.F, state.q = lay.unpack(x, state.q)
        _refresh(state, ch, assoc)
    v = _violations(state, ch, assoc, params, bounds)
    names = ["sut", *[f"target{i}" for i in range(ch.n_tar)]]
    violated = tuple(nm for nm, vi in zip(names, v) if vi >= -1e-9)
    _, e_sut, e_tar = link_mses(state.F, state.q, state.filters, ch, assoc)
    relax = lambda e, b: max(b, e * (1 + 1e-4) + 1e-12)
    sut_max = relax(e_sut, sut_max)
    tar_max = np.array([relax(e, b) for e, b in zip(e_tar, tar_max)])
    return state, (sut_max, tar_max), violated, newton


def _report(state, ch, assoc, params, converged, violated, newton):
    rep = metrics.evaluate(state.F, ch, assoc, state.p_sat)
    scnr_db = 10 * np.log10(np.maximum(rep.scnr, 1e-300))
    scnr_min_db = 10 * np.log10(params.scnr_min_lin)
    return SolveReport(
        converged=converged, iterations=state.iterations,
        objective=state.objective[-1] if state.objective else float("nan"),
        trajectory=list(state.objective), sut_slack=rep.rate_sut - params.R_min_S,
        scnr_slack=scnr_db - scnr_min_db,
        power_slack=float(params.P_BS - np.sum(abs(state.F) ** 2)),
        infeasible=bool(violated), violated=violated, newton=newton)


def power_interval(F, ch, assoc, params):
    """Satellite powers ``[lo, hi]`` keeping the SUT rate and every SCNR
    feasible for fixed ``F`` and MMSE receivers (empty when ``lo > hi``)."""
    i_s = np.sum(abs(ch.h_sut @ F) ** 2) + ch.noise
    gam = params.scnr_min_lin
    lo = (2.0 ** params.R_min_S - 1) * i_s / ch.g_sut if ch.g_sut > 0 else 0.0
    hi = params.P_LEO
    rx = _rx(assoc)
    for i in range(ch.n_tar):
        # SCNR(p) = a - p |b|^2 / (1 + p c) for the rank-one satellite echo
        v = metrics.sensing_signal(F, ch, rx, i)
        R0 = metrics.sensing_covariance(F, ch, rx, 0.0, i)
        gv = ch.g_rad_vec[rx[i]]
        Ri = np.linalg.solve(R0, np.column_stack([v, gv]))
        a = np.real(v.conj() @ Ri[:, 0])
        b = abs(v.conj() @ Ri[:, 1]) ** 2
        c = np.real(gv.conj() @ Ri[:, 1])
        if a < gam:
            hi = -1.0
        elif b - (a - gam) * c > 0:
            hi = min(hi, (a - gam) / (b - (a - gam) * c))
    return lo, hi


def rate_vs_power(F, ch):
    """Cell sum rate as a function of the satellite power for fixed ``F``."""
    hf = abs(ch.H @ F) ** 2
    sig = np.diag(hf)
    rest = hf.sum(axis=1) - sig + ch.noise
    i_s = np.sum(abs(ch.h_sut @ F) ** 2) + ch.noise
    return lambda p: float(np.sum(np.log2(1 + sig / (rest + ch.g_tut * p)))
                           + np.log2(1 + ch.g_sut * p / i_s))


def power_search(F, q, ch, assoc, params):
    """Exact satellite-power step for fixed ``F``: maximise the cell sum rate
    over the feasible power interval, keeping ``q`` unless strictly better."""
    lo, hi = power_interval(F, ch, assoc, params)
    p0 = q ** 2
    if not (hi > 0 and lo <= hi and lo <= p0 <= hi * (1 + 1e-12)):
        return q
    f = rate_vs_power(F, ch)
    a = np.log(max(lo, hi * 1e-12))
    res = minimize_scalar(lambda u: -f(np.exp(u)), bounds=(a, np.log(hi)),
                          method="bounded", options={"xatol": 1e-10})
    best_p, best_f = p0, f(p0)
    for cand in (np.exp(res.x), lo, hi):
        cand = min(max(cand, lo), hi)
        if f(cand) > best_f + 1e-12:
            best_p, best_f = cand, f(cand)
    return float(np.sqrt(best_p))


def _iterate(ch, assoc, params, mode, F0, q0, bounds=None, tol=None, max_iter=None,
             search_power=True):
    tol = params.wmmse_tol if tol is None else tol
    max_iter = params.wmmse_max_iter if max_iter is None else max_iter
    bounds = mse_bounds(params) if bounds is None else bounds
    state = _refresh(WmmseState(F=np.array(F0, dtype=complex), q=float(q0)), ch, assoc)
    state, bounds, violated, newton = restore(state, ch, assoc, params, mode, bounds)
    state.objective.append(weighted_objective(state, ch, assoc))
    converged = False
    for _ in range(max_iter):
        F, q, res = transmitter_update(state, ch, assoc, params, mode, bounds)
        newton += res.newton
        if res.status == "infeasible":
            break
        if mode == P1 and search_power and not violated:
            q = power_search(F, q, ch, assoc, params)
        trial = _refresh(WmmseState(F=F, q=q), ch, assoc)
        J = weighted_objective(trial, ch, assoc)
        J_prev = state.objective[-1]
        if J > J_prev or np.max(_violations(trial, ch, assoc, params, bounds)) > 1e-9:
            # inexact step; the current point is already stationary to solver accuracy
            converged = True
            break
        state.F, state.q, state.filters, state.weights = F, q, trial.filters, trial.weights
        state.objective.append(J)
        state.iterations += 1
        if J_prev - J <= tol * max(1.0, abs(J)):
            converged = True
            break
    return state, _report(state, ch, assoc, params, converged, violated, newton)


def solve_p1(ch, assoc, params, init=None):
    """Joint beamformer and satellite power design; returns ``(F, p_bar, report)``."""
    F0 = initial_beamformer(ch, assoc, 0.999 * params.P_BS) if init is None else init
    q0 = np.sqrt(0.999 * params.P_LEO / params.M)
    state, rep = _iterate(ch, assoc, params, P1, F0, q0)
    return state.F, min(state.p_sat, params.P_LEO), rep


def solve_p3(ch, assoc, params, p_bar, init=None):
    """Beamformer refinement under a fixed satellite power; returns ``(F, report)``."""
    F0 = initial_beamformer(ch, assoc, 0.999 * params.P_BS) if init is None else init
    state, rep = _iterate(ch, assoc, params, P3, F0, np.sqrt(max(p_bar, 0.0)))
    return state.F, rep


def max_min_scnr(ch, assoc, params, p_sat, stop_at=None, max_iter=100):
    """Best worst-target SCNR with all TBS power on the sensing beams.

    Alternates MMSE receivers with a minimum-of-maximum MSE transmit step.
    With ``stop_at`` (linear SCNR) the search ends as soon as every target
    reaches it.  Returns ``(min SCNR, F)``.
    """
    if ch.n_tar == 0:
        return np.inf, np.zeros((ch.n_tx, ch.K), dtype=complex)
    sens = ch.replace(H=np.zeros((0, ch.n_tx), dtype=complex), g_tut=np.zeros(0))
    rx = _rx(assoc)
    F = initial_beamformer(sens, rx, 0.999 * params.P_BS)
    state = _refresh(WmmseState(F=F, q=np.sqrt(p_sat)), sens, rx)
    best = -np.inf
    for _ in range(max_iter):
        worst = float(np.min(metrics.max_scnr(state.F, sens, rx, p_sat)))
        if stop_at is not None and worst >= stop_at:
            break
        if worst <= best * (1 + 1e-6):
            break
        best = worst
        e = link_mses(state.F, state.q, state.filters, sens, rx)[2]
        # tighten every target to the current worst level, the kernel shrinks it further
        lay, prob = build_problem(state, sens, rx, params, P3, (1.0, np.full(ch.n_tar, e.max())))
        prob.scale[0] = 0.0
        prob.r[1] = -1.0  # SUT row is irrelevant here
        prob.P[1] = 0.0
        prob.c[1] = 0.0
        x, _, _ = phase1(prob, lay.pack(state.F, state.q))
        state.F, _ = lay.unpack(x, state.q)
        _refresh(state, sens, rx)
    worst = float(np.min(metrics.max_scnr(state.F, sens, rx, p_sat)))
    F = np.concatenate([np.zeros((ch.n_tx, ch.K), dtype=complex), state.F], axis=1)
    return worst, F
