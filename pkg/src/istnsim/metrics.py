"""SINR, SCNR, rates and the MSE families of one cell.

``F`` is the ``(N_TX, K + N_tar)`` beamforming matrix; column ``K + i``
illuminates target ``i``.  ``assoc`` is an Association or an integer array
giving the radar receiver of each target.  Receive filters for the sensing
links are rows (``r = w @ y``).
"""

from dataclasses import dataclass

import numpy as np


def _rx(assoc):
    return np.asarray(getattr(assoc, "receiver", assoc), dtype=int)


@dataclass
class ReceiveFilters:
    w_tut: np.ndarray   # (K,) complex
    w_sut: float        # real and non-negative
    w_tar: np.ndarray   # (N_tar, N_RX) complex rows


def sinr_tut(F, ch, p_sat, k):
    hf = ch.H[k] @ F
    sig = abs(hf[k]) ** 2
    return sig / (np.sum(abs(hf) ** 2) - sig + ch.g_tut[k] * p_sat + ch.noise)


def sinr_sut(F, ch, p_sat):
    return ch.g_sut * p_sat / (np.sum(abs(ch.h_sut @ F) ** 2) + ch.noise)


def sensing_signal(F, ch, assoc, i):
    """Desired echo ``G_tar[i, A(i)] f_{K+i}`` seen by the associated receiver."""
    n = _rx(assoc)[i]
    return ch.G_tar[i, n] @ F[:, ch.K + i]


def sensing_covariance(F, ch, assoc, p_sat, i):
    """Interference-plus-noise covariance of the virtual link of target ``i``.

    Other-target echoes of beam ``K+i`` and every clutter echo enter as
    independent streams, so ``w R w^H`` equals the SCNR denominator.
    """
    n = _rx(assoc)[i]
    c = ch.K + i
    f = F[:, c]
    others = np.delete(ch.G_tar[:, n], i, axis=0) @ f          # (N_tar-1, N_RX)
    cl = (ch.G_cl[:, n] @ F).transpose(1, 0, 2).reshape(ch.G_cl.shape[2], -1)
    cross = ch.G[n] @ np.delete(F, c, axis=1)                  # (N_RX, C-1)
    gv = ch.g_rad_vec[n]
    R = others.T @ others.conj() + cl @ cl.conj().T + cross @ cross.conj().T
    R += p_sat * np.outer(gv, gv.conj())
    R += ch.noise * np.eye(R.shape[0])
    return R


def interference_terms(F, w, ch, assoc, p_sat, i):
    """The four SCNR interference terms of target ``i`` for filter row ``w``."""
    n = _rx(assoc)[i]
    c = ch.K + i
    f = F[:, c]
    i1 = sum(abs(w @ ch.G_tar[j, n] @ f) ** 2 for j in range(ch.n_tar) if j != i)
    i2 = float(np.sum(abs(w @ ch.G_cl[:, n] @ F) ** 2))
    wg = w @ ch.G[n]
    i3 = float(np.sum(abs(np.delete(wg @ F, c)) ** 2))
    i4 = abs(w @ ch.g_rad_vec[n]) ** 2 * p_sat
    return np.array([i1, i2, i3, i4], dtype=float)


def scnr(F, w, ch, assoc, p_sat, i):
    """``(SCNR_i, [I1, I2, I3, I4])`` for filter ``w``."""
    v = sensing_signal(F, ch, assoc, i)
    terms = interference_terms(F, w, ch, assoc, p_sat, i)
    den = terms.sum() + np.sum(abs(w) ** 2) * ch.noise
    # a zero filter (an unpowered beam) sees neither signal nor noise
    return (abs(w @ v) ** 2 / den if den > 0 else 0.0), terms


def virtual_sinr(F, w, ch, assoc, p_sat, i):
    """SINR of the virtual link where coherent echoes act as separate streams."""
    n = _rx(assoc)[i]
    c = ch.K + i
    fd = F[:, c]
    desired = w @ ch.G_tar[i, n] @ fd
    streams = [ch.G_tar[j, n] @ fd for j in range(ch.n_tar) if j != i]
    for col in range(F.shape[1]):
        for l in range(ch.G_cl.shape[0]):
            streams.append(ch.G_cl[l, n] @ F[:, col])
        if col != c:
            streams.append(ch.G[n] @ F[:, col])
    streams.append(ch.g_rad_vec[n] * np.sqrt(p_sat))
    interf = sum(abs(w @ s) ** 2 for s in streams)
    return abs(desired) ** 2 / (interf + ch.noise * np.sum(abs(w) ** 2))


def mmse_filters(F, ch, assoc, p_sat):
    """MMSE receivers of every link for the current transmit state."""
    hf = ch.H @ F
    r_comm = np.sum(abs(hf) ** 2, axis=1) + ch.g_tut * p_sat + ch.noise
    w_tut = np.diag(hf).conj() / r_comm
    amp = np.sqrt(ch.g_sut * p_sat)
    w_sut = amp / (np.sum(abs(ch.h_sut @ F) ** 2) + amp ** 2 + ch.noise)
    w_tar = np.empty((ch.n_tar, ch.g_rad_vec.shape[1]), dtype=complex)
    for i in range(ch.n_tar):
        v = sensing_signal(F, ch, assoc, i)
        R = sensing_covariance(F, ch, assoc, p_sat, i) + np.outer(v, v.conj())
        w_tar[i] = np.linalg.solve(R.T, v.conj())
    return ReceiveFilters(w_tut=w_tut, w_sut=float(w_sut), w_tar=w_tar)


def max_scnr(F, ch, assoc, p_sat):
    """SCNR of every target under its optimal (MVDR) receive filter."""
    out = np.empty(ch.n_tar)
    for i in range(ch.n_tar):
        v = sensing_signal(F, ch, assoc, i)
        R = sensing_covariance(F, ch, assoc, p_sat, i)
        out[i] = np.real(v.conj() @ np.linalg.solve(R, v))
    return out


def mse_tut(F, w, ch, p_sat, k):
    hf = ch.H[k] @ F
    e = abs(1 - w * hf[k]) ** 2 + abs(w) ** 2 * (np.sum(abs(hf) ** 2) - abs(hf[k]) ** 2)
    return e + abs(w) ** 2 * (ch.g_tut[k] * p_sat + ch.noise)


def mse_sut(F, w, ch, p_sat):
    amp = np.sqrt(ch.g_sut * p_sat)
    return abs(1 - w * amp) ** 2 + abs(w) ** 2 * (np.sum(abs(ch.h_sut @ F) ** 2) + ch.noise)


def mse_target(F, w, ch, assoc, p_sat, i):
    v = sensing_signal(F, ch, assoc, i)
    terms = interference_terms(F, w, ch, assoc, p_sat, i)
    return abs(1 - w @ v) ** 2 + terms.sum() + ch.noise * np.sum(abs(w) ** 2)


def rate(sinr):
    return np.log2(1.0 + np.asarray(sinr))


@dataclass
class MetricsReport:
    """Performance of one cell; SINR/SCNR values are linear."""
    sinr_tut: np.ndarray
    sinr_sut: float
    scnr: np.ndarray
    interference: np.ndarray  # (N_tar, 4)

    @property
    def rate_tut(self):
        return rate(self.sinr_tut)

    @property
    def rate_sut(self):
        return float(rate(self.sinr_sut))

    @property
    def terr_rate(self):
        return float(np.sum(self.rate_tut))

    @property
    def cell_rate(self):
        return self.terr_rate + self.rate_sut

    @property
    def min_scnr_db(self):
        if self.scnr.size == 0:
            return float("nan")
        return float(10 * np.log10(max(np.min(self.scnr), 1e-300)))


def evaluate(F, ch, assoc, p_sat, filters=None):
    """Cell metrics; sensing uses the MMSE filters unless ``filters`` is given."""
    if filters is None:
        filters = mmse_filters(F, ch, assoc, p_sat)
    s_tut = np.array([sinr_tut(F, ch, p_sat, k) for k in range(ch.K)])
    sc = np.empty(ch.n_tar)
    terms = np.empty((ch.n_tar, 4))
    for i in range(ch.n_tar):
        sc[i], terms[i] = scnr(F, filters.w_tar[i], ch, assoc, p_sat, i)
    return MetricsReport(sinr_tut=s_tut, sinr_sut=float(sinr_sut(F, ch, p_sat)),
                         scnr=sc, interference=terms)


def istn_sum_rate(reports):
    return float(sum(r.cell_rate for r in reports))
