import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from conftest import cell, random_beamformer, small_params
from istnsim import metrics
from istnsim.oracles import check_identities


def setup(seed=0, **kw):
    p = small_params(**kw)
    _, ch, a = cell(p, seed)
    rng = np.random.default_rng(seed)
    F = random_beamformer(rng, ch.n_tx, ch.K + ch.n_tar, p.P_BS)
    return p, ch, a, F, rng


def sinr_loop(F, ch, p_sat, k):
    """Term-by-term TUT SINR from the raw channel."""
    sig = abs(np.vdot(ch.H[k].conj(), F[:, k])) ** 2
    inter = 0.0
    for c in range(F.shape[1]):
        if c != k:
            inter += abs(sum(ch.H[k, t] * F[t, c] for t in range(ch.n_tx))) ** 2
    return sig / (inter + ch.g_tut[k] * p_sat + ch.noise)


def test_zero_beamformer_gives_zero_sinr():
    p, ch, a, F, _ = setup()
    assert metrics.sinr_tut(np.zeros_like(F), ch, 10.0, 0) == 0.0


def test_matched_filter_sinr():
    p, ch, a, F, _ = setup(K=1)
    F = np.zeros_like(F)
    h = ch.H[0]
    F[:, 0] = h.conj() / np.linalg.norm(h)
    assert metrics.sinr_tut(F, ch, 0.0, 0) == pytest.approx(np.sum(abs(h) ** 2) / ch.noise,
                                                             rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_tut_sinr_oracle(seed):
    p, ch, a, F, rng = setup(seed)
    ps = rng.uniform(0, 50)
    for k in range(ch.K):
        assert metrics.sinr_tut(F, ch, ps, k) == pytest.approx(sinr_loop(F, ch, ps, k),
                                                                rel=1e-12)


def test_sut_sinr_edges_and_oracle():
    p, ch, a, F, _ = setup()
    assert metrics.sinr_sut(F, ch, 0.0) == 0.0
    assert metrics.sinr_sut(np.zeros_like(F), ch, 7.0) == pytest.approx(
        ch.g_sut * 7.0 / ch.noise, rel=1e-12)
    inter = sum(abs(ch.h_sut @ F[:, c]) ** 2 for c in range(F.shape[1]))
    assert metrics.sinr_sut(F, ch, 7.0) == pytest.approx(ch.g_sut * 7.0 / (inter + ch.noise),
                                                          rel=1e-12)


def test_pure_snr_without_interference():
    p, ch, a, F, rng = setup(N_tar=1, K=1)
    ch = ch.replace(G_cl=np.zeros_like(ch.G_cl))
    F[:, 0] = 0.0
    w = rng.normal(size=p.N_RX) + 1j * rng.normal(size=p.N_RX)
    s, terms = metrics.scnr(F, w, ch, a, 0.0, 0)
    n = a.receiver[0]
    snr = abs(w @ ch.G_tar[0, n] @ F[:, 1]) ** 2 / (np.sum(abs(w) ** 2) * ch.noise)
    assert not terms.any()
    assert s == pytest.approx(snr, rel=1e-12)


def test_filter_orthogonal_to_satellite_nulls_fourth_term():
    p, ch, a, F, rng = setup()
    n = a.receiver[0]
    g = ch.g_rad_vec[n]
    w = rng.normal(size=p.N_RX) + 1j * rng.normal(size=p.N_RX)
    w -= (w @ g) / (g.conj() @ g) * g.conj()
    _, terms = metrics.scnr(F, w, ch, a, 1e4, 0)
    assert terms[3] <= 1e-20 * np.sum(abs(g) ** 2) * 1e4


@pytest.mark.parametrize("seed", range(4))
def test_interference_terms_oracle(seed):
    p, ch, a, F, rng = setup(seed, N_cl=2)
    ps = rng.uniform(0, 100)
    for i in range(ch.n_tar):
        n = a.receiver[i]
        w = rng.normal(size=p.N_RX) + 1j * rng.normal(size=p.N_RX)
        f = F[:, ch.K + i]
        i1 = sum(abs(w @ ch.G_tar[j, n] @ f) ** 2 for j in range(ch.n_tar) if j != i)
        i2 = sum(abs(w @ ch.G_cl[l, n] @ F[:, c]) ** 2
                 for l in range(ch.G_cl.shape[0]) for c in range(F.shape[1]))
        i3 = sum(abs(w @ sum(ch.G_tar[j, n] for j in range(ch.n_tar)) @ F[:, c]) ** 2
                 for c in range(F.shape[1]) if c != ch.K + i)
        i4 = ps * abs(w @ ch.g_rad_vec[n]) ** 2
        _, terms = metrics.scnr(F, w, ch, a, ps, i)
        assert np.allclose(terms, [i1, i2, i3, i4], rtol=1e-10, atol=0)
        # the covariance reproduces the same denominator
        R = metrics.sensing_covariance(F, ch, a, ps, i)
        den = terms.sum() + ch.noise * np.sum(abs(w) ** 2)
        assert np.real(w @ R @ w.conj()) == pytest.approx(den, rel=1e-10)


@pytest.mark.parametrize("seed", range(4))
def test_scnr_equals_virtual_sinr(seed):
    p, ch, a, F, rng = setup(seed)
    fl = metrics.mmse_filters(F, ch, a, 20.0)
    for i in range(ch.n_tar):
        s, _ = metrics.scnr(F, fl.w_tar[i], ch, a, 20.0, i)
        assert s == pytest.approx(metrics.virtual_sinr(F, fl.w_tar[i], ch, a, 20.0, i),
                                  rel=1e-10)


@pytest.mark.parametrize("seed", range(4))
def test_mvdr_against_generalized_eigenvalue(seed):
    p, ch, a, F, rng = setup(seed, N_RX=3)
    ps = 30.0
    best = metrics.max_scnr(F, ch, a, ps)
    fl = metrics.mmse_filters(F, ch, a, ps)
    for i in range(ch.n_tar):
        v = metrics.sensing_signal(F, ch, a, i)
        R = metrics.sensing_covariance(F, ch, a, ps, i)
        lam = scipy.linalg.eigh(np.outer(v.conj(), v), R.conj(), eigvals_only=True)[-1]
        assert best[i] == pytest.approx(lam, rel=1e-8)
        assert metrics.scnr(F, fl.w_tar[i], ch, a, ps, i)[0] == pytest.approx(best[i], rel=1e-9)
        for _ in range(20):
            w = rng.normal(size=p.N_RX) + 1j * rng.normal(size=p.N_RX)
            assert metrics.scnr(F, w, ch, a, ps, i)[0] <= best[i] * (1 + 1e-10)


def test_zero_filter_mse_is_one():
    p, ch, a, F, _ = setup()
    assert metrics.mse_tut(F, 0.0, ch, 3.0, 0) == 1.0
    assert metrics.mse_sut(F, 0.0, ch, 3.0) == 1.0
    assert metrics.mse_target(F, np.zeros(p.N_RX), ch, a, 3.0, 0) == 1.0


def test_mmse_identities_small_batch():
    res = check_identities(draws=300, seed=5)
    assert res.ok, res.line()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0.0, 200.0))
def test_mmse_identity_property(seed, ps):
    p, ch, a, F, _ = setup(seed % 1000)
    fl = metrics.mmse_filters(F, ch, a, ps)
    for k in range(ch.K):
        e = metrics.mse_tut(F, fl.w_tut[k], ch, ps, k)
        assert 1 / e == pytest.approx(1 + metrics.sinr_tut(F, ch, ps, k), rel=1e-9)
    if ps > 0:
        e = metrics.mse_sut(F, fl.w_sut, ch, ps)
        assert 1 / e == pytest.approx(1 + metrics.sinr_sut(F, ch, ps), rel=1e-9)


def test_evaluate_report():
    p, ch, a, F, _ = setup()
    rep = metrics.evaluate(F, ch, a, 10.0)
    assert rep.terr_rate == pytest.approx(np.sum(np.log2(1 + rep.sinr_tut)))
    assert rep.cell_rate == pytest.approx(rep.terr_rate + rep.rate_sut)
    assert rep.min_scnr_db == pytest.approx(10 * np.log10(rep.scnr.min()))
    assert metrics.istn_sum_rate([rep, rep]) == pytest.approx(2 * rep.cell_rate)
