import numpy as np
import pytest

from conftest import small_params
from istnsim import metrics, pipeline, wmmse
from istnsim.pipeline import (COLUMNS, EXPERIMENTS, instance_seed, make_instance,
                              run_cooperation, run_experiment, sensing_feasible)


def desk(**kw):
    base = dict(N_TX=8, K=3, N_tar=2, N_RX=4, wmmse_tol=1e-3)
    base.update(kw)
    return small_params(**base)


def test_minimal_run_has_one_row_per_method():
    p = desk()
    res = run_experiment("sumrate_vs_pbs", p, "P_BS", [p.P_BS], 1)
    assert [r["method"] for r in res.rows] == list(EXPERIMENTS["sumrate_vs_pbs"])
    assert all(tuple(r) == COLUMNS for r in res.rows)
    assert len(res.diagnostics) == len(EXPERIMENTS["sumrate_vs_pbs"]) * p.M


def test_unknown_names_are_rejected():
    with pytest.raises(ValueError):
        run_experiment("nope", desk(), "P_BS", [1.0], 1)
    with pytest.raises(ValueError):
        run_experiment("sumrate_vs_pbs", desk(), "P_BS", [1.0], 1, methods=("nope",))


def test_instances_are_paired():
    p = desk()
    a, b = make_instance(p, 11), make_instance(p.replace(P_BS=1.0), 11)
    assert np.array_equal(a.pre[0].H, b.pre[0].H) and np.array_equal(a.post[0].H, b.post[0].H)
    assert instance_seed(0, 3) == instance_seed(0, 3) != instance_seed(0, 4)
    assert instance_seed(0, 3) != instance_seed(1, 3)


def test_aging_switch():
    p = desk()
    on, off = make_instance(p, 2), make_instance(p.replace(csi_aging=False), 2)
    assert not np.allclose(on.pre[0].H, on.post[0].H)
    assert off.post[0] is off.pre[0]
    assert np.array_equal(on.pre[0].G_tar, on.post[0].G_tar)


def test_single_cell_merge_keeps_request():
    p = desk(M=1)
    run, reports = run_cooperation(p, 0)
    assert run.p_bar[0] <= p.P_LEO
    assert run.p_merged[0] == pytest.approx(run.p_bar[0], rel=1e-12)
    assert len(reports) == 1


@pytest.mark.parametrize("seed", range(3))
def test_refinement_without_aging_never_loses(seed):
    p = desk(M=1, csi_aging=False, wmmse_tol=1e-5)
    run, reports = run_cooperation(p, seed)
    if not run.feasible.all():
        pytest.skip("drop infeasible")
    inst = run.instance
    ch, a = inst.pre[0], run.associations[0]
    F1, p1, _ = wmmse.solve_p1(ch, a, p)
    before = metrics.evaluate(F1, ch, a, p1)
    after = reports[0]
    assert after.cell_rate >= before.cell_rate - 1e-6


def test_merge_respects_budget_and_requests():
    p = desk(M=3, P_LEO=20.0)
    run, _ = run_cooperation(p, 1)
    assert run.p_merged.sum() <= p.P_LEO * (1 + 1e-9)
    assert np.all(run.p_merged <= run.p_bar * (1 + 1e-12))


def test_feasible_cells_meet_requirements():
    p = desk(M=2)
    n = 0
    for seed in range(4):
        run, reports = run_cooperation(p, seed)
        for ok, rep in zip(run.feasible, reports):
            if ok:
                n += 1
                assert rep.rate_sut >= p.R_min_S - 1e-4
                assert rep.min_scnr_db >= p.SCNR_min - 0.01
    assert n > 0


def test_sensing_feasible_monotone_in_budget():
    p = desk()
    inst = make_instance(p, 4)
    a = pipeline.associate(inst, "proposed")[0]
    flags = [sensing_feasible(inst.post[0], a, p.replace(P_BS=pb)) for pb in (1e-4, 1e-2, 1.0, 10.0)]
    assert flags == sorted(flags)


def test_sensing_feasible_without_noise_satellite_or_clutter():
    p = desk(SCNR_min=30.0)
    inst = make_instance(p, 0)
    ch = inst.post[0]
    quiet = ch.replace(noise=1e-30, G_cl=np.zeros_like(ch.G_cl)).without_interference()
    a = pipeline.associate(inst, "proposed")[0]
    assert sensing_feasible(quiet, a, p, p_sat=0.0)


def test_random_association_stream_depends_on_method():
    p = desk(N_tar=3)
    inst = make_instance(p, 0)
    draws = {tuple(pipeline.associate(inst, "random", m)[0].receiver)
             for m in ("a", "b", "c", "d", "e", "f")}
    assert len(draws) > 1
    assert pipeline.associate(inst, "random", "a")[0].receiver.tolist() == \
        pipeline.associate(inst, "random", "a")[0].receiver.tolist()


def test_failure_experiment_rows():
    p = desk()
    res = run_experiment("failure_vs_radius", p, "r_sens", [50.0, 150.0], 2,
                         methods=("interference_free", "proposed", "monostatic"))
    assert len(res.rows) == 6
    for r in res.rows:
        assert 0.0 <= r["failure_prob"] <= 1.0
        assert np.isnan(r["istn_sum_rate"])


def test_worker_pool_gives_identical_rows():
    p = desk(K=2)
    args = ("ts_split", p, "R_min_S", [3.0], 2, ("proposed",))
    a = run_experiment(*args, workers=1)
    b = run_experiment(*args, workers=2)
    assert a.rows == b.rows
