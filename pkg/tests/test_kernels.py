import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import small_params
from istnsim import _kernels, wmmse
from istnsim._kernels import _barrier_py
from istnsim.association import associate_baseline
from istnsim.channel import draw_channels
from istnsim.scenario import generate_geometry

try:
    from istnsim._kernels import _barrier
except ImportError:
    _barrier = None

cp = pytest.importorskip("cvxpy")


def transmitter_problem(seed, mode=wmmse.P1, **kw):
    p = small_params(**kw)
    ch = draw_channels(generate_geometry(p, seed), p)[0]
    a = associate_baseline("nearest", ch.alpha_tar)
    F = wmmse.initial_beamformer(ch, a, 0.5 * p.P_BS)
    state = wmmse._refresh(wmmse.WmmseState(F=F, q=np.sqrt(0.5)), ch, a)
    e = wmmse.link_mses(state.F, state.q, state.filters, ch, a)
    lay, prob = wmmse.build_problem(state, ch, a, p, mode, (2.0 * e[1], 2.0 * e[2]))
    return prob, lay.pack(state.F, state.q)


def run(kernel, prob, x0, phase1=False, t0=0.0):
    gap = 1e-10 * max(1.0, abs(prob.values(x0)[0]))
    return kernel.barrier_solve(prob.sizes, prob.P, prob.c, prob.r, prob.scale,
                                np.ascontiguousarray(x0), t0, phase1, gap, -np.inf, 400)


def test_backend_selected():
    assert _kernels.BACKEND in ("cython", "python")
    if _barrier is not None and not os.environ.get("ISTNSIM_PURE_PYTHON"):
        assert _kernels.BACKEND == "cython"


def test_environment_forces_fallback():
    code = "from istnsim import _kernels; print(_kernels.BACKEND)"
    env = dict(os.environ, ISTNSIM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True)
    assert out.stdout.strip() == "python"


@pytest.mark.skipif(_barrier is None, reason="compiled kernel not built")
@pytest.mark.parametrize("seed", range(4))
def test_backends_agree(seed):
    prob, x0 = transmitter_problem(seed)
    xp, tp, lp, ip, sp = run(_barrier_py, prob, x0)
    xc, tc, lc, ic, sc = run(_barrier, prob, x0)
    assert sp == sc == _kernels.CONVERGED
    assert abs(ip - ic) <= 5  # tail steps differ only by rounding
    assert np.allclose(xp, xc, rtol=0, atol=1e-7 * max(1.0, np.abs(xp).max()))
    # barrier duals carry the centring error of the last outer step
    assert np.allclose(lp, lc, rtol=1e-3, atol=1e-12)


@pytest.mark.skipif(_barrier is None, reason="compiled kernel not built")
def test_backends_agree_in_phase_one():
    prob, x0 = transmitter_problem(1)
    g = prob.values(x0)[1:]
    scale = np.ones(prob.m)
    prob.scale = scale
    t0 = np.max(g) + 1.0
    out_p = run(_barrier_py, prob, x0, True, t0)
    out_c = run(_barrier, prob, x0, True, t0)
    assert out_p[1] == pytest.approx(out_c[1], rel=1e-8, abs=1e-12)


def dense(prob):
    from istnsim.oracles import _dense
    return _dense(prob)


@pytest.mark.parametrize("seed,mode", [(0, wmmse.P1), (1, wmmse.P1), (2, wmmse.P3)])
def test_transmitter_qcqp_against_conic_solver(seed, mode):
    prob, x0 = transmitter_problem(seed, mode)
    res = wmmse.solve_qcqp(prob, x0=x0)
    A = dense(prob)
    x = cp.Variable(prob.n)
    q = [cp.quad_form(x, cp.psd_wrap(A[k])) + prob.c[k] @ x + prob.r[k]
         for k in range(prob.m + 1)]
    pr = cp.Problem(cp.Minimize(q[0]), [g <= 0 for g in q[1:]])
    pr.solve(solver=cp.CLARABEL)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(pr.value, abs=1e-5 * max(1.0, abs(pr.value)))
