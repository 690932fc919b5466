import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from istnsim.convex import (MergeProblem, QcqpBuilder, kkt_residuals, solve_merge,
                            solve_qcqp, water_fill)
from istnsim.oracles import check_merge

cp = pytest.importorskip("cvxpy")


def herm_psd(rng, n, rank=None):
    A = rng.normal(size=(n, rank or n)) + 1j * rng.normal(size=(n, rank or n))
    return A @ A.conj().T


def test_complex_lifting_preserves_forms():
    rng = np.random.default_rng(0)
    A, b = herm_psd(rng, 3), rng.normal(size=3) + 1j * rng.normal(size=3)
    bld = QcqpBuilder([("c", 3), ("r", 1)], 0)
    bld.add_quad(0, 0, A)
    bld.add_linear(0, 0, b)
    bld.add_quad(0, 1, np.array([[2.0]]))
    bld.add_const(0, 0.5)
    prob = bld.build([])
    x = rng.normal(size=3) + 1j * rng.normal(size=3)
    z = bld.pack([x, 1.5])
    expect = np.real(x.conj() @ A @ x) - 2 * np.real(np.vdot(b, x)) + 2 * 1.5 ** 2 + 0.5
    assert prob.values(z)[0] == pytest.approx(expect, rel=1e-12)
    back = bld.unpack(z)
    assert np.allclose(back[0], x) and back[1][0] == 1.5


def _ball_problem(center, radius2=None):
    n = len(center)
    bld = QcqpBuilder([("r", n)], 0 if radius2 is None else 1)
    if radius2 is None:
        bld.add_quad(0, 0, np.eye(n))
        bld.add_linear(0, 0, center)
        bld.add_const(0, center @ center)
    else:
        bld.add_quad(0, 0, np.eye(n))
        bld.add_quad(1, 0, np.eye(n))
        bld.add_linear(1, 0, center)
        bld.add_const(1, center @ center - radius2)
    return bld.build(np.zeros(0 if radius2 is None else 1))


def test_unconstrained_least_squares():
    c = np.array([1.0, -2.0, 0.5])
    res = solve_qcqp(_ball_problem(c))
    assert res.status == "optimal"
    assert np.allclose(res.x, c, atol=1e-6)


def test_nearly_equality_forcing_constraint():
    c = np.array([3.0, 4.0])
    res = solve_qcqp(_ball_problem(c, 1e-10))
    assert res.status == "optimal"
    assert np.allclose(res.x, c, atol=1e-4)


def test_contradictory_constraint_is_infeasible():
    res = solve_qcqp(_ball_problem(np.array([3.0, 4.0]), -1.0))
    assert res.status == "infeasible"


def random_qcqp(seed, n=6, m=3):
    rng = np.random.default_rng(seed)
    bld = QcqpBuilder([("r", n)], m)
    mats, lins, consts = [], [], []
    for row in range(m + 1):
        L = rng.normal(size=(n, n))
        A = L @ L.T / n + (0.1 if row == 0 else 0.0) * np.eye(n)
        b = rng.normal(size=n)
        r = -rng.uniform(1.0, 3.0) if row else 0.0
        bld.add_quad(row, 0, A)
        bld.add_linear(row, 0, b)
        bld.add_const(row, r)
        mats.append(A)
        lins.append(b)
        consts.append(r)
    return bld.build(np.zeros(m)), mats, lins, consts


def cvx_qcqp(mats, lins, consts):
    x = cp.Variable(len(lins[0]))
    q = [cp.quad_form(x, cp.psd_wrap(A)) - 2 * b @ x + r for A, b, r in zip(mats, lins, consts)]
    pr = cp.Problem(cp.Minimize(q[0]), [g <= 0 for g in q[1:]])
    pr.solve(solver=cp.CLARABEL)
    return pr.value, x.value


@pytest.mark.parametrize("seed", range(8))
def test_random_qcqp_matches_conic_solver(seed):
    prob, mats, lins, consts = random_qcqp(seed)
    res = solve_qcqp(prob)
    ref, _ = cvx_qcqp(mats, lins, consts)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(ref, abs=1e-4 * max(1.0, abs(ref)))
    kkt = kkt_residuals(prob, res.x, res.lam)
    assert max(kkt.values()) <= 1e-6


def test_infeasible_start_goes_through_phase_one():
    prob, mats, lins, consts = random_qcqp(3)
    res = solve_qcqp(prob, x0=np.full(prob.n, 50.0))
    ref, _ = cvx_qcqp(mats, lins, consts)
    assert res.objective == pytest.approx(ref, abs=1e-4 * max(1.0, abs(ref)))


def water_level_oracle(g, total):
    """Classic water-filling by sorting the inverse gains."""
    inv = np.sort(1.0 / g)
    for k in range(len(inv), 0, -1):
        level = (total + inv[:k].sum()) / k
        if level > inv[k - 1]:
            return np.maximum(level - 1.0 / g, 0.0)
    raise AssertionError


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=8), st.floats(1e-3, 1e3))
def test_water_fill_matches_closed_form(gains, total):
    g = np.array(gains)
    p = water_fill(g, total)
    assert np.allclose(p, water_level_oracle(g, total), rtol=1e-8, atol=1e-10 * total)
    assert p.sum() <= total * (1 + 1e-12)


def test_water_fill_caps_and_floors():
    g = np.array([10.0, 1.0, 0.1])
    p = water_fill(g, 5.0, caps=np.array([1.0, 10.0, 10.0]), floors=np.array([0, 0, 0.5]))
    assert p[0] == pytest.approx(1.0) and p[2] >= 0.5 - 1e-12
    assert p.sum() == pytest.approx(5.0)
    # the free beams share one water level
    assert p[1] + 1 / g[1] == pytest.approx(p[2] + 1 / g[2]) or p[2] == pytest.approx(0.5)
    assert np.array_equal(water_fill(g, 100.0, caps=np.ones(3)), np.ones(3))
    assert not water_fill(np.zeros(3), 5.0).any()


def test_merge_single_beam():
    for p_bar in (50.0, 500.0):
        p = solve_merge(MergeProblem(p_bar=[p_bar], g_sut=[1e-10], denom=[1e-12], P_LEO=200.0))
        assert p[0] == pytest.approx(min(p_bar, 200.0))


def test_merge_slack_budget_keeps_requests():
    p_bar = np.array([20.0, 50.0, 30.0])
    p = solve_merge(MergeProblem(p_bar=p_bar, g_sut=np.ones(3), denom=np.ones(3), P_LEO=200.0))
    assert np.allclose(p, p_bar)


def test_merge_large_caps_is_water_filling():
    rng = np.random.default_rng(2)
    g, d = rng.uniform(1, 5, 4) * 1e-10, rng.uniform(1, 3, 4) * 1e-12
    p = solve_merge(MergeProblem(p_bar=np.full(4, 1e6), g_sut=g, denom=d, P_LEO=200.0))
    assert np.allclose(p, water_level_oracle(g / d, 200.0), rtol=1e-8)


def test_merge_against_simplex_grid():
    res = check_merge(draws=15, seed=3)
    assert res.ok, res.line()
