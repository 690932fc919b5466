"""Comparison methods: zero-forcing designs, exhaustive power search,
greedy/uniform non-cooperative operation and the monostatic configuration."""

from dataclasses import dataclass

import numpy as np

from . import wmmse
from .channel import array_response
from .convex import water_fill
from .metrics import _rx
from .scenario import ParamError, validate_params

@dataclass(frozen=True)
class MethodSpec:
    name: str
    beamforming: str      # wmmse | zf
    tbs_power: str        # wmmse | scnr_waterfill | uniform
    sat_power: str        # joint_merge | waterfill | eps | uniform | greedy_max
    association: str      # proposed | nearest | greedy | random
    sat_to_terr: bool = True
    terr_to_sat: bool = True

    def __post_init__(self):
        if self.name == "interference_free" and (self.sat_to_terr or self.terr_to_sat):
            raise ValueError("the interference-free method has both couplings off")


METHODS = {m.name: m for m in [
    MethodSpec("proposed", "wmmse", "wmmse", "joint_merge", "proposed"),
    MethodSpec("interference_free", "zf", "scnr_waterfill", "waterfill", "nearest",
               sat_to_terr=False, terr_to_sat=False),
    MethodSpec("zf_eps", "zf", "scnr_waterfill", "eps", "nearest"),
    MethodSpec("greedy", "zf", "scnr_waterfill", "greedy_max", "nearest"),
    MethodSpec("uniform", "zf", "uniform", "waterfill", "nearest"),
    MethodSpec("coop_uniform", "wmmse", "wmmse", "uniform", "proposed"),
    MethodSpec("assoc_nearest", "wmmse", "wmmse", "joint_merge", "nearest"),
    MethodSpec("assoc_greedy", "wmmse", "wmmse", "joint_merge", "greedy"),
    MethodSpec("assoc_random", "wmmse", "wmmse", "joint_merge", "random"),
    MethodSpec("monostatic", "wmmse", "wmmse", "joint_merge", "nearest"),
]}


def zf_directions(ch, theta_t):
    """Unit-norm columns of the pseudo-inverse of the stacked TUT channels and
    target transmit steering rows."""
    rows = [ch.H]
    if ch.n_tar:
        rows.append(array_response(np.asarray(theta_t), ch.n_tx).conj())
    Hs = np.vstack(rows)
    if Hs.shape[0] > ch.n_tx:
        raise ValueError("zero forcing needs K + N_tar <= N_TX")
    D = np.linalg.pinv(Hs)
    return D / np.linalg.norm(D, axis=0)


class ZfContext:
    """Precomputed ZF gains of one cell; powers are allocated per batch entry."""

    def __init__(self, ch, assoc, theta_t, D=None):
        self.ch = ch
        self.rx = _rx(assoc)
        self.D = zf_directions(ch, theta_t) if D is None else D
        K, C = ch.K, ch.K + ch.n_tar
        self.K, self.C = K, C
        self.gain_tut = abs(ch.H @ self.D) ** 2                  # (K, C)
        self.gain_sut = abs(ch.h_sut @ self.D) ** 2              # (C,)
        nrx = ch.g_rad_vec.shape[1]
        self.X = np.zeros((ch.n_tar, C, nrx, nrx), dtype=complex)
        self.v = np.zeros((ch.n_tar, nrx), dtype=complex)
        self.Xs = np.zeros((ch.n_tar, nrx, nrx), dtype=complex)
        for i in range(ch.n_tar):
            n = self.rx[i]
            own = K + i
            self.v[i] = ch.G_tar[i, n] @ self.D[:, own]
            for c in range(C):
                e = [ch.G_cl[l, n] @ self.D[:, c] for l in range(ch.G_cl.shape[0])]
                if c == own:
                    e += [ch.G_tar[j, n] @ self.D[:, c] for j in range(ch.n_tar) if j != i]
                else:
                    e.append(ch.G[n] @ self.D[:, c])
                E = np.array(e).reshape(-1, nrx)
                self.X[i, c] = E.T @ E.conj()
            gv = ch.g_rad_vec[n]
            self.Xs[i] = np.outer(gv, gv.conj())

    def unit_scnr(self, powers, p_sat):
        """``v^H R^-1 v`` per target (SCNR per unit beam power), batched over
        ``powers`` (B, C) and ``p_sat`` (B,)."""
        B = powers.shape[0]
        out = np.empty((B, self.ch.n_tar))
        eye = np.eye(self.v.shape[1]) * self.ch.noise
        for i in range(self.ch.n_tar):
            R = np.einsum("bc,crs->brs", powers, self.X[i]) + eye
            R += p_sat[:, None, None] * self.Xs[i]
            sol = np.linalg.solve(R, np.broadcast_to(self.v[i][:, None], R.shape[:2] + (1,)))
            out[:, i] = np.real(sol[..., 0] @ self.v[i].conj())
        return out

    def scnr(self, powers, p_sat):
        """MVDR SCNR of each target."""
        return powers[:, self.K:] * self.unit_scnr(powers, p_sat)

    def target_powers(self, tut_powers, p_sat, budget, gamma, iters=300):
        """Smallest sensing-beam powers meeting ``gamma`` on every target.

        Fixed-point iteration ``pi <- gamma / s(pi)``; ``s`` falls as any power
        grows, so the iterates rise monotonically to the least solution or
        beyond the budget when there is none.  Returns ``(powers, ok)``.
        """
        B = tut_powers.shape[0]
        P = np.zeros((B, self.C))
        P[:, :self.K] = tut_powers
        if self.ch.n_tar == 0:
            return P, np.ones(B, dtype=bool)
        live = np.ones(B, dtype=bool)
        for _ in range(iters):
            new = gamma / self.unit_scnr(P[live], p_sat[live])
            old = P[live, self.K:]
            P[live, self.K:] = new
            done = np.all(np.abs(new - old) <= 1e-10 * new, axis=1)
            done |= new.sum(axis=1) > budget[live]
            live[np.flatnonzero(live)[done]] = False
            if not live.any():
                break
        ok = P[:, self.K:].sum(axis=1) <= budget
        ok &= np.all(self.scnr(P, p_sat) >= gamma * (1 - 1e-6), axis=1)
        bad = ~ok
        if bad.any():
            # sensing keeps priority: the whole budget goes to the targets
            sp = P[bad, self.K:]
            P[bad, self.K:] = sp * (budget[bad] / sp.sum(axis=1))[:, None]
        return P, ok

    def allocate(self, p_design, budget, gamma, rule="waterfill", rounds=6):
        """Sensing-first allocation then the residual over the TUT streams.

        ``p_design`` is the satellite power the designer accounts for at the
        TUTs and radars (0 when it is ignored).  Returns ``(powers, feasible)``.
        """
        p_design = np.atleast_1d(np.asarray(p_design, dtype=float))
        budget = np.atleast_1d(np.asarray(budget, dtype=float))
        p_design, budget = np.broadcast_arrays(p_design, budget)
        budget = budget.copy()
        p_design = p_design.copy()
        a = np.diag(self.gain_tut)[None, :self.K] / (
            self.ch.noise + np.outer(p_design, self.ch.g_tut))
        tut = np.zeros((budget.size, self.K))
        for _ in range(rounds):
            P, ok = self.target_powers(tut, p_design, budget, gamma)
            rest = np.maximum(budget - P[:, self.K:].sum(axis=1), 0.0)
            if rule == "uniform":
                new = np.tile(rest[:, None] / max(self.K, 1), (1, self.K))
            else:
                new = batched_water_fill(a, rest)
            new[~ok] = 0.0
            if np.allclose(new, tut, rtol=1e-9, atol=0.0):
                break
            tut = new
        P, ok = self.target_powers(tut, p_design, budget, gamma)
        P[~ok, :self.K] = 0.0
        # less TUT power only lowers the sensing interference
        rest = np.maximum(budget - P[:, self.K:].sum(axis=1), 0.0)
        tot = P[:, :self.K].sum(axis=1)
        shrink = np.where(tot > rest, rest / np.where(tot > 0, tot, 1.0), 1.0)
        P[:, :self.K] *= shrink[:, None]
        return P, ok

    def rates(self, powers, p_sat, ch=None):
        """Per-batch TUT rates (B, K) and SUT rate (B,) on ``ch`` (default own)."""
        ch = self.ch if ch is None else ch
        gt = abs(ch.H @ self.D) ** 2
        gs = abs(ch.h_sut @ self.D) ** 2
        rx = powers @ gt.T                                      # (B, K)
        sig = powers[:, :self.K] * np.diag(gt)[None, :self.K]
        sinr = sig / (rx - sig + np.outer(p_sat, ch.g_tut) + ch.noise)
        s_sut = ch.g_sut * p_sat / (powers @ gs + ch.noise)
        return np.log2(1 + sinr), np.log2(1 + s_sut)

    def beamformer(self, powers):
        return self.D * np.sqrt(np.maximum(powers, 0.0))[None, :]


def batched_water_fill(gains, totals, iters=100):
    """Water-filling per row of ``gains`` (B, K) with budgets ``totals`` (B,)."""
    gains = np.asarray(gains, dtype=float)
    out = np.zeros_like(gains)
    live = gains > 0
    inv = np.where(live, 1.0 / np.where(live, gains, 1.0), np.inf)
    lo = np.zeros(gains.shape[0])
    hi = np.where(live, inv, 0.0).max(axis=1) + totals
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        s = np.clip(mid[:, None] - inv, 0.0, None).sum(axis=1)
        hi = np.where(s > totals, mid, hi)
        lo = np.where(s > totals, lo, mid)
    out = np.clip(lo[:, None] - inv, 0.0, None)
    tot = out.sum(axis=1)
    scale = np.where(tot > 0, np.minimum(1.0, totals / np.where(tot > 0, tot, 1.0)), 0.0)
    return out * scale[:, None]


def zf_beamformer(ch, assoc, theta_t, params, p_design=0.0, rule="waterfill"):
    """ZF beamformer with sensing-first power and water-filled TUT streams.

    Returns ``(F, feasible)``.
    """
    ctx = ZfContext(ch, assoc, theta_t)
    P, ok = ctx.allocate(p_design, params.P_BS, params.scnr_min_lin, rule)
    return ctx.beamformer(P[0]), bool(ok[0])


def eps_grid(top, size):
    """Logarithmic grid over ``(0, top]`` with ``size`` points plus zero."""
    if size < 2:
        raise ValueError("grid size must be at least 2")
    return np.concatenate([[0.0], np.geomspace(top * 1e-4, top, size - 1)])


def eps_satellite_power(ctx, params, grid_size=None, p_cap=None):
    """Exhaustive search over satellite power and TBS budget for one cell.

    Returns ``(p_sat, P_tbs, powers, feasible)`` maximising the cell sum rate;
    points meeting the SUT rate requirement are preferred.
    """
    size = params.eps_grid if grid_size is None else grid_size
    p_top = params.P_LEO if p_cap is None else p_cap
    ps = eps_grid(p_top, size)
    pb = eps_grid(params.P_BS, size)
    PS, PB = [a.ravel() for a in np.meshgrid(ps, pb, indexing="ij")]
    P, ok = ctx.allocate(PS, PB, params.scnr_min_lin)
    r_tut, r_sut = ctx.rates(P, PS)
    total = r_tut.sum(axis=1) + r_sut
    meets = ok & (r_sut >= params.R_min_S)
    pool = meets if meets.any() else (ok if ok.any() else np.ones_like(ok))
    idx = np.flatnonzero(pool)[np.argmax(total[pool])]
    return float(PS[idx]), float(PB[idx]), P[idx], bool(ok[idx])


def satellite_waterfill(g_sut, noise, P_LEO):
    """Satellite-only water-filling over its own SUT links."""
    return water_fill(np.asarray(g_sut, dtype=float) / noise, P_LEO)


@dataclass
class MethodOutput:
    """Design of one method over all cells of a drop."""
    F: list
    p_sat: np.ndarray
    feasible: np.ndarray
    channels: list   # channels the design is evaluated on


def satellite_waterfill_cells(chs, P_LEO):
    return satellite_waterfill([ch.g_sut for ch in chs], chs[0].noise, P_LEO)


def _zf_cells(chs, assocs, thetas, params, rule, p_design):
    out, ok = [], []
    for ch, a, th, p in zip(chs, assocs, thetas, p_design):
        ctx = ZfContext(ch, a, th)
        P, good = ctx.allocate(p, params.P_BS, params.scnr_min_lin, rule)
        out.append(ctx.beamformer(P[0]))
        ok.append(bool(good[0]))
    return out, np.array(ok)


def interference_free_method(chs, assocs, thetas, params):
    """Greedy design and metrics with both couplings removed."""
    free = [ch.without_interference() for ch in chs]
    F, ok = _zf_cells(free, assocs, thetas, params, "waterfill", np.zeros(len(chs)))
    return MethodOutput(F, satellite_waterfill_cells(free, params.P_LEO), ok, free)


def greedy_method(chs, assocs, thetas, params, rule="waterfill"):
    """Each system maximises its own rate as if the other were absent."""
    F, ok = _zf_cells(chs, assocs, thetas, params, rule, np.zeros(len(chs)))
    return MethodOutput(F, satellite_waterfill_cells(chs, params.P_LEO), ok, list(chs))


def uniform_method(chs, assocs, thetas, params):
    return greedy_method(chs, assocs, thetas, params, rule="uniform")


def zf_eps_method(chs, assocs, thetas, params, grid_size=None):
    """Per-cell exhaustive search; beam powers are then cut back to the
    satellite budget by capped water-filling."""
    F, p, ok, ctxs, grids = [], [], [], [], []
    for ch, a, th in zip(chs, assocs, thetas):
        ctx = ZfContext(ch, a, th)
        ps, _, P, good = eps_satellite_power(ctx, params, grid_size)
        ctxs.append(ctx)
        grids.append(P)
        p.append(ps)
        ok.append(good)
    p = np.array(p)
    if p.sum() > params.P_LEO:
        gains = np.array([ch.g_sut for ch in chs]) / chs[0].noise
        p = water_fill(gains, params.P_LEO, caps=p)
    for ctx, P in zip(ctxs, grids):
        F.append(ctx.beamformer(P))
    return MethodOutput(F, p, np.array(ok), list(chs))


def coop_uniform(chs, assocs, params):
    """Per-cell WMMSE beamforming under the uniform satellite power ``P_LEO / M``."""
    p = np.full(len(chs), params.P_LEO / len(chs))
    F, ok = [], []
    for ch, a, pm in zip(chs, assocs, p):
        Fm, rep = wmmse.solve_p3(ch, a, params, pm)
        F.append(Fm)
        ok.append(not rep.infeasible)
    return MethodOutput(F, p, np.array(ok), list(chs))


def monostatic_config(params):
    """Single receiver at the TBS holding all ``N_rad * N_RX`` antennas."""
    if params.monostatic:
        return params
    n_rx = params.N_RX * params.N_rad
    if n_rx > params.max_rx_antennas:
        raise ParamError([f"monostatic receiver needs {n_rx} antennas, cap is "
                          f"{params.max_rx_antennas}"])
    out = params.replace(N_RX=n_rx, N_rad=1, monostatic=True)
    validate_params(out)
    return out
