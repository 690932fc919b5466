"""Pre-optimization, merging and refinement across cells, and the Monte
Carlo experiments built on top of them."""

import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import baselines, metrics, wmmse
from .association import associate_baseline, associate_proposed
from .channel import age_cell_channels, draw_channels, perturb_satellite
from .convex import MergeProblem, solve_merge
from .scenario import (AGING, ASSOC, PREDICTION, generate_geometry, lin2db,
                       substream, validate_params)

EXPERIMENTS = {
    "sumrate_vs_pbs": ("interference_free", "proposed", "zf_eps", "greedy", "uniform"),
    "scnr_vs_pbs": ("interference_free", "proposed", "zf_eps", "greedy", "uniform"),
    "ts_split": ("interference_free", "proposed", "zf_eps"),
    "association_compare": ("proposed", "assoc_nearest", "assoc_greedy", "assoc_random"),
    "failure_vs_radius": ("interference_free", "proposed", "assoc_nearest", "assoc_greedy",
                          "assoc_random", "monostatic"),
    "multicell_sumrate": ("interference_free", "proposed", "coop_uniform", "zf_eps", "greedy"),
    "normalized_vs_M": ("interference_free", "proposed"),
}

COLUMNS = ("experiment", "method", "sweep_var", "sweep_value", "seed_count", "istn_sum_rate",
           "terr_sum_rate", "sat_sum_rate", "min_scnr_db", "sut_rate", "failure_prob",
           "feasible_frac")

_SCNR_TOL_DB = 0.01


@dataclass
class Instance:
    """One Monte Carlo drop: geometry and the two CSI snapshots."""
    params: object
    seed: int
    geometry: object
    pre: list         # terrestrial CSI at the pre-optimization time
    post: list        # CSI at the transmission time
    predicted: list   # pre-optimization CSI with the predicted satellite gains


def make_instance(params, seed):
    geom = generate_geometry(params, seed)
    pre = draw_channels(geom, params)
    if params.csi_aging:
        post = [age_cell_channels(ch, params, params.aging_rho, substream(seed, AGING, m))
                for m, ch in enumerate(pre)]
    else:
        post = list(pre)
    # satellite gains follow the ephemeris, so their future value is the truth
    # up to the prediction error
    predicted = [perturb_satellite(ch, params.sat_prediction_std,
                                   substream(seed, PREDICTION, m))
                 for m, ch in enumerate(pre)]
    return Instance(params, int(seed), geom, pre, post, predicted)


def _method_key(name):
    return zlib.crc32(name.encode())


def associate(inst, rule, method=""):
    """Association of every cell under ``rule``; the random rule draws from a
    per-(seed, cell, method) stream."""
    p = inst.params
    out = []
    for m, (cell, ch) in enumerate(zip(inst.geometry.cells, inst.pre)):
        if rule == "proposed":
            out.append(associate_proposed(cell, ch.alpha_tar, p.delta_sat, p.delta_tar))
        else:
            rng = substream(inst.seed, ASSOC, m, _method_key(method or rule))
            out.append(associate_baseline(rule, ch.alpha_tar, rng))
    return out


@dataclass
class CooperationRun:
    p_bar: np.ndarray
    reports_p1: list
    p_merged: np.ndarray
    F: list
    reports_p3: list
    instance: Instance
    associations: list
    feasible: np.ndarray = field(default=None)


def merge_inputs(inst, F1, p_bar):
    """Merging problem seen by the gateway from the pre-optimized designs."""
    params = inst.params
    chs = inst.predicted
    g = np.array([ch.g_sut for ch in chs])
    D = np.array([np.sum(abs(ch.h_sut @ F) ** 2) + ch.noise for ch, F in zip(chs, F1)])
    floors = (2.0 ** params.R_min_S - 1) * D / np.where(g > 0, g, np.inf)
    return MergeProblem(p_bar=np.asarray(p_bar), g_sut=g, denom=D, P_LEO=params.P_LEO,
                        p_min=floors)


def run_cooperation(params, seed, association="proposed", inst=None):
    """Full three-stage run; returns ``(CooperationRun, [MetricsReport per cell])``."""
    inst = make_instance(params, seed) if inst is None else inst
    assocs = associate(inst, association, association)
    F1, p_bar, rep1 = [], [], []
    for ch, a in zip(inst.predicted, assocs):
        F, p, rep = wmmse.solve_p1(ch, a, params)
        F1.append(F)
        p_bar.append(p)
        rep1.append(rep)
    p_bar = np.array(p_bar)
    p_s = solve_merge(merge_inputs(inst, F1, p_bar))
    F3, rep3, reports = [], [], []
    for ch, a, F, p in zip(inst.post, assocs, F1, p_s):
        Fm, rep = wmmse.solve_p3(ch, a, params, p, init=F)
        F3.append(Fm)
        rep3.append(rep)
        reports.append(metrics.evaluate(Fm, ch, a, p))
    ok = np.array([not (r1.infeasible or r3.infeasible) for r1, r3 in zip(rep1, rep3)])
    run = CooperationRun(p_bar=p_bar, reports_p1=rep1, p_merged=p_s, F=F3, reports_p3=rep3,
                         instance=inst, associations=assocs, feasible=ok)
    return run, reports


def sensing_feasible(ch, assoc, params, p_sat=None):
    """Whether every target can reach the SCNR floor with the whole TBS budget
    spent on sensing, under satellite power ``p_sat`` (default ``P_LEO / M``)."""
    p = params.P_LEO / params.M if p_sat is None else p_sat
    gam = params.scnr_min_lin
    worst, _ = wmmse.max_min_scnr(ch, assoc, params, p, stop_at=gam)
    return bool(worst >= gam * (1 - 1e-6))


@dataclass
class CellOutcome:
    feasible: bool
    terr_rate: float
    sut_rate: float
    min_scnr_db: float
    p_sat: float
    failure: bool


def _outcomes(F, p, feasible, chs, assocs, params):
    out = []
    floor = params.SCNR_min - _SCNR_TOL_DB
    for Fm, pm, ok, ch, a in zip(F, p, feasible, chs, assocs):
        rep = metrics.evaluate(Fm, ch, a, pm)
        out.append(CellOutcome(bool(ok), rep.terr_rate, rep.rate_sut, rep.min_scnr_db,
                               float(pm), bool(rep.min_scnr_db < floor)))
    return out


def run_method(inst, name):
    """Per-cell outcomes of method ``name`` on the drop ``inst``."""
    params = inst.params
    spec = baselines.METHODS[name]
    thetas = [c.theta_t for c in inst.geometry.cells]
    if spec.beamforming == "wmmse" and spec.sat_power == "joint_merge":
        if name == "monostatic":
            mono = make_instance(baselines.monostatic_config(params), inst.seed)
            run, _ = run_cooperation(mono.params, inst.seed, "nearest", inst=mono)
        else:
            run, _ = run_cooperation(params, inst.seed, spec.association, inst=inst)
        return _outcomes(run.F, run.p_merged, run.feasible, run.instance.post,
                         run.associations, params)
    assocs = associate(inst, spec.association, name)
    if name == "coop_uniform":
        res = baselines.coop_uniform(inst.post, assocs, params)
    elif name == "interference_free":
        res = baselines.interference_free_method(inst.post, assocs, thetas, params)
    elif name == "greedy":
        res = baselines.greedy_method(inst.post, assocs, thetas, params)
    elif name == "uniform":
        res = baselines.uniform_method(inst.post, assocs, thetas, params)
    elif name == "zf_eps":
        res = baselines.zf_eps_method(inst.post, assocs, thetas, params)
    else:
        raise ValueError(f"unknown method {name!r}")
    return _outcomes(res.F, res.p_sat, res.feasible, res.channels, assocs, params)


def sensing_outcomes(inst, name):
    """Sensing-only outcome per cell: the best worst-target SCNR with the whole
    TBS budget on sensing.  ``interference_free`` removes the satellite."""
    params = inst.params
    if name == "monostatic":
        inst = make_instance(baselines.monostatic_config(params), inst.seed)
        rule = "nearest"
    elif name == "interference_free":
        rule = "nearest"
    else:
        rule = baselines.METHODS[name].association
    assocs = associate(inst, rule, name)
    p = 0.0 if name == "interference_free" else params.P_LEO / params.M
    gam = params.scnr_min_lin
    out = []
    for ch, a in zip(inst.post, assocs):
        worst, _ = wmmse.max_min_scnr(ch, a, params, p)
        db = float(lin2db(max(worst, 1e-300)))
        ok = worst >= gam * (1 - 1e-6)
        out.append(CellOutcome(ok, np.nan, np.nan, db, p, not ok))
    return out


def instance_seed(master_seed, index):
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1)[0])


def _task(args):
    experiment, params, methods, value_index, seed_index, seed = args
    inst = make_instance(params, seed)
    runner = sensing_outcomes if experiment == "failure_vs_radius" else run_method
    return value_index, seed_index, {m: runner(inst, m) for m in methods}


@dataclass
class ExperimentResult:
    rows: list          # dicts keyed by COLUMNS
    diagnostics: list   # per (sweep value, seed, method, cell)


def _aggregate(experiment, method, var, value, per_seed):
    """Means over the drops where every method's design was feasible."""
    seeds = sorted(per_seed)
    cells = [c for s in seeds for c in per_seed[s][method]]
    if experiment == "failure_vs_radius":
        kept = seeds  # infeasibility is the quantity measured here
    else:
        kept = [s for s in seeds
                if all(c.feasible for ms in per_seed[s].values() for c in ms)]
    pick = lambda f: [f(per_seed[s][method]) for s in kept]
    mean = lambda xs: float(np.mean(xs)) if len(xs) else float("nan")
    terr = pick(lambda cs: sum(c.terr_rate for c in cs))
    sat = pick(lambda cs: sum(c.sut_rate for c in cs))
    return {
        "experiment": experiment, "method": method, "sweep_var": var, "sweep_value": value,
        "seed_count": len(seeds),
        "istn_sum_rate": mean([a + b for a, b in zip(terr, sat)]),
        "terr_sum_rate": mean(terr), "sat_sum_rate": mean(sat),
        "min_scnr_db": mean(pick(lambda cs: min(c.min_scnr_db for c in cs))),
        "sut_rate": mean(pick(lambda cs: np.mean([c.sut_rate for c in cs]))),
        "failure_prob": mean([c.failure for c in cells]),
        "feasible_frac": mean([c.feasible for c in cells]),
    }


def run_experiment(name, params, sweep_var, values, seeds, methods=None, master_seed=0,
                   workers=1):
    """Every method on identical drops per seed; one row per (value, method)."""
    if name not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {name!r}")
    methods = tuple(EXPERIMENTS[name] if methods is None else methods)
    for m in methods:
        if m not in baselines.METHODS:
            raise ValueError(f"unknown method {m!r}")
    values = list(values)
    pts = [validate_params(params.replace(**{sweep_var: v})) for v in values]
    tasks = [(name, pts[i], methods, i, s, instance_seed(master_seed, s))
             for i in range(len(values)) for s in range(seeds)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            done = list(pool.map(_task, tasks))
    else:
        done = [_task(t) for t in tasks]
    table = {}
    for vi, si, res in done:
        table.setdefault(vi, {})[si] = res
    rows, diag = [], []
    for vi, value in enumerate(values):
        per_seed = table[vi]
        for m in methods:
            rows.append(_aggregate(name, m, sweep_var, value, per_seed))
        for si in sorted(per_seed):
            for m in methods:
                for cell, c in enumerate(per_seed[si][m]):
                    diag.append({"sweep_value": value, "seed_index": si, "method": m,
                                 "cell": cell, "feasible": c.feasible,
                                 "terr_rate": c.terr_rate, "sut_rate": c.sut_rate,
                                 "min_scnr_db": c.min_scnr_db, "p_sat": c.p_sat,
                                 "failure": c.failure})
    return ExperimentResult(rows, diag)
