"""Independent reference checks of the solvers and identities.

Each check returns an ``OracleResult``; ``run_oracle("all")`` runs every one.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np

from . import metrics, wmmse
from .association import associate_baseline
from .channel import beam_pattern, draw_channels
from .convex import MergeProblem, solve_merge
from .scenario import SystemParams, generate_geometry


@dataclass
class OracleResult:
    name: str
    ok: bool
    worst: float
    tol: float
    detail: str = ""

    def line(self):
        tag = "PASS" if self.ok else "FAIL"
        return f"{tag} {self.name}: worst {self.worst:.3g} (tol {self.tol:.3g}) {self.detail}".rstrip()


def simplex_grid_merge(prob, steps=200):
    """Best merge value over a grid of the capped budget polytope (M <= 3)."""
    g = np.asarray(prob.g_sut) / np.asarray(prob.denom)
    caps = np.minimum(np.asarray(prob.p_bar, dtype=float), prob.P_LEO)
    axes = [np.linspace(0.0, c, steps + 1) for c in caps]
    grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(caps), -1).T
    grid = grid[grid.sum(axis=1) <= prob.P_LEO * (1 + 1e-12)]
    vals = np.sum(np.log2(1 + grid * g), axis=1)
    return float(vals.max())


def merge_value(prob, p):
    g = np.asarray(prob.g_sut) / np.asarray(prob.denom)
    return float(np.sum(np.log2(1 + g * p)))


def check_merge(draws=50, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        m = int(rng.integers(1, 4))
        prob = MergeProblem(p_bar=rng.uniform(1, 150, m), g_sut=rng.uniform(0.5, 5, m) * 1e-10,
                            denom=rng.uniform(1, 3, m) * 1e-12, P_LEO=200.0)
        ours = merge_value(prob, solve_merge(prob))
        grid = simplex_grid_merge(prob, 400 if m < 3 else 120)
        # the grid can only under-estimate the optimum
        worst = max(worst, (grid - ours) / grid)
    return OracleResult("merge", worst <= 1e-3, worst, 1e-3, "relative shortfall vs grid")


def tiny_params():
    return SystemParams(N_TX=1, K=1, N_tar=1, N_rad=1, N_RX=1, M=1, N_cl=1, R_min_S=0.5,
                        SCNR_min=-30.0)


def tiny_transmitter_problem(seed):
    p = tiny_params()
    geom = generate_geometry(p, seed)
    ch = draw_channels(geom, p)[0]
    a = associate_baseline("nearest", ch.alpha_tar)
    F = wmmse.initial_beamformer(ch, a, 0.5 * p.P_BS)
    state = wmmse._refresh(wmmse.WmmseState(F=F, q=np.sqrt(0.1)), ch, a)
    return p, ch, a, state


def qcqp_grid_min(prob, radius, pts=21, rounds=3):
    """Smallest objective over feasible points of nested cubic grids."""
    n = prob.n
    center = np.zeros(n)
    half = radius
    best = np.inf
    for _ in range(rounds):
        axis = np.linspace(-1.0, 1.0, pts)
        X = center + half * np.array(list(product(axis, repeat=n)))
        vals = np.einsum("bi,kij,bj->bk", X, _dense(prob), X) + X @ prob.c.T + prob.r
        feas = np.all(vals[:, 1:] <= 0, axis=1)
        if not feas.any():
            break
        k = np.flatnonzero(feas)[np.argmin(vals[feas, 0])]
        best = min(best, vals[k, 0])
        center = X[k]
        half *= 3.0 / (pts - 1)
    return float(best)


def _dense(prob):
    A = np.zeros((prob.m + 1, prob.n, prob.n))
    for row in range(prob.m + 1):
        for off, nb, blk in prob.blocks(row):
            A[row, off:off + nb, off:off + nb] = blk
    return A


def check_transmitter_grid(draws=60):
    worst = 0.0
    used = 0
    for s in range(draws):
        p, ch, a, state = tiny_transmitter_problem(s)
        lay, prob = wmmse.build_problem(state, ch, a, p, wmmse.P3)
        res = wmmse.solve_qcqp(prob, x0=lay.pack(state.F, state.q))
        if res.status == "infeasible":
            continue
        grid = qcqp_grid_min(prob, np.sqrt(p.P_BS))
        if not np.isfinite(grid):
            continue
        used += 1
        worst = max(worst, abs(res.objective - grid) / max(abs(grid), 1e-12))
    return OracleResult("transmitter_grid", used > 0 and worst <= 1e-2, worst, 1e-2,
                        f"{used} instances")


def _random_draw(rng):
    p = SystemParams(N_TX=int(rng.integers(2, 9)), K=int(rng.integers(1, 4)),
                     N_tar=int(rng.integers(1, 3)), N_RX=int(rng.integers(1, 5)), M=1,
                     N_cl=int(rng.integers(1, 3)))
    geom = generate_geometry(p, int(rng.integers(0, 2 ** 31)))
    ch = draw_channels(geom, p)[0]
    a = associate_baseline("nearest", ch.alpha_tar)
    C = ch.K + ch.n_tar
    F = (rng.normal(size=(ch.n_tx, C)) + 1j * rng.normal(size=(ch.n_tx, C)))
    F *= np.sqrt(p.P_BS / np.sum(abs(F) ** 2))
    return p, ch, a, F, float(rng.uniform(0, p.P_LEO))


def check_identities(draws=10000, seed=0):
    """``1 / MSE_mmse = 1 + SINR`` on every link and ``SCNR == virtual SINR``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        p, ch, a, F, ps = _random_draw(rng)
        fl = metrics.mmse_filters(F, ch, a, ps)
        k = int(rng.integers(ch.K))
        e = metrics.mse_tut(F, fl.w_tut[k], ch, ps, k)
        s = metrics.sinr_tut(F, ch, ps, k)
        worst = max(worst, abs(1 / e - (1 + s)) / (1 + s))
        e = metrics.mse_sut(F, fl.w_sut, ch, ps)
        s = metrics.sinr_sut(F, ch, ps)
        worst = max(worst, abs(1 / e - (1 + s)) / (1 + s))
        i = int(rng.integers(ch.n_tar))
        w = fl.w_tar[i]
        sc, _ = metrics.scnr(F, w, ch, a, ps, i)
        worst = max(worst, abs(sc - metrics.virtual_sinr(F, w, ch, a, ps, i)) / sc)
        e = metrics.mse_target(F, w, ch, a, ps, i)
        s = metrics.max_scnr(F, ch, a, ps)[i]
        worst = max(worst, abs(1 / e - (1 + s)) / (1 + s))
    return OracleResult("identities", worst <= 1e-9, worst, 1e-9, f"{draws} draws")


def check_beam_pattern():
    err = abs(beam_pattern(1.0, 1.0) - 10 ** -0.3)
    return OracleResult("beam_pattern", err <= 1e-15, err, 1e-15)


def check_monotone(draws=200, seed=0):
    """Largest per-iteration increase of the WMMSE objective."""
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(draws):
        p = SystemParams(N_TX=int(rng.integers(2, 7)), K=int(rng.integers(1, 4)),
                         N_tar=int(rng.integers(1, 3)), M=1, N_RX=2,
                         wmmse_max_iter=20, wmmse_tol=1e-9)
        geom = generate_geometry(p, int(rng.integers(0, 2 ** 31)))
        ch = draw_channels(geom, p)[0]
        a = associate_baseline("nearest", ch.alpha_tar)
        _, _, rep = wmmse.solve_p1(ch, a, p)
        t = np.asarray(rep.trajectory)
        if t.size > 1:
            worst = max(worst, float(np.max(np.diff(t) / np.maximum(1.0, abs(t[:-1])))))
    worst = max(worst, 0.0)
    return OracleResult("monotone", worst <= 1e-8, worst, 1e-8, f"{draws} instances")


ORACLES = {
    "merge": check_merge,
    "transmitter_grid": check_transmitter_grid,
    "identities": check_identities,
    "beam_pattern": check_beam_pattern,
    "monotone": check_monotone,
}


def run_oracle(name):
    if name == "all":
        return [fn() for fn in ORACLES.values()]
    if name not in ORACLES:
        raise KeyError(name)
    return [ORACLES[name]()]
