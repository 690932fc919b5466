"""Channel realizations: satellite attenuations, terrestrial multipath and
bistatic sensing/clutter matrices.

Conventions: ULAs with half-wavelength spacing and unit-modulus elements.
Communication channels are rows acting on transmit beamformers from the
left (``h @ f``).  Sensing matrices are ``amp * a_r(theta_r) a_t(theta_t)^H``
so the same transmit steering serves both link types.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from .scenario import CHANNEL, db2lin, substream

_HE = 1.0  # effective environment height (m)


def array_response(theta, n_elem):
    """ULA response ``exp(j pi p sin(theta))``, ``p = 0..n_elem-1``; theta in deg.

    A sequence of angles returns one response per row.
    """
    th = np.asarray(theta, dtype=float)
    if np.any(np.abs(th) > 90.0):
        raise ValueError("array angle outside [-90, 90] degrees")
    p = np.arange(n_elem)
    return np.exp(1j * np.pi * np.multiply.outer(np.sin(np.radians(th)), p))


def beam_pattern(phi, phi_3db):
    """Spot-beam gain relative to the beam center."""
    return 10.0 ** (-0.3 * (np.asarray(phi, dtype=float) / phi_3db) ** 2)


def sut_gain_db(phi, params):
    """Rectangular SUT antenna pattern in dBi."""
    return np.where(np.abs(phi) <= params.phi_th, params.G_main, params.G_side)


def satellite_attenuation(d, phi, g_rx_db, params, xi):
    """Power attenuation of a satellite-to-ground link.

    ``xi`` is the linear shadowing factor; all other gains are in dB.
    """
    lam_term = (params.c / (2 * np.pi * params.f_c)) ** 2
    gains = db2lin(params.G_s) * db2lin(g_rx_db)
    return lam_term * gains / np.asarray(d, dtype=float) ** 2 * beam_pattern(phi, params.phi_3dB) * xi


def shadowing(rng, sigma_db, size=None):
    """Log-normal shadowing factor (linear)."""
    return 10.0 ** (rng.normal(0.0, sigma_db, size) / 10.0)


# urban macro statistics (38.901 UMa), heights in m


def uma_los_probability(d2d, h_ut=1.5):
    d2d = np.asarray(d2d, dtype=float)
    c = (max(h_ut - 13.0, 0.0) / 10.0) ** 1.5
    far = (18.0 / d2d + np.exp(-d2d / 63.0) * (1 - 18.0 / np.maximum(d2d, 1e-9))) * \
        (1 + c * 1.25 * (d2d / 100.0) ** 3 * np.exp(-d2d / 150.0))
    return np.where(d2d <= 18.0, 1.0, far)


def uma_path_loss(d2d, d3d, f_c, h_bs, h_ut, los):
    """Path loss in dB; ``f_c`` in Hz."""
    fg = f_c / 1e9
    d2d = np.asarray(d2d, dtype=float)
    d3d = np.asarray(d3d, dtype=float)
    d_bp = 4 * (h_bs - _HE) * (h_ut - _HE) * f_c / 299792458.0
    pl1 = 28.0 + 22.0 * np.log10(d3d) + 20.0 * np.log10(fg)
    pl2 = 28.0 + 40.0 * np.log10(d3d) + 20.0 * np.log10(fg) \
        - 9.0 * np.log10(d_bp ** 2 + (h_bs - h_ut) ** 2)
    pl_los = np.where(d2d <= d_bp, pl1, pl2)
    if los:
        return pl_los
    pl_nlos = 13.54 + 39.08 * np.log10(d3d) + 20.0 * np.log10(fg) - 0.6 * (h_ut - 1.5)
    return np.maximum(pl_los, pl_nlos)


UMA_SF_LOS = 4.0
UMA_SF_NLOS = 6.0


@dataclass(frozen=True)
class TerrestrialLink:
    """Large-scale state and small-scale draws of one TBS-to-terminal link."""
    p_los: float
    beta_L: float
    beta_N: float
    theta_L: float
    theta_N: np.ndarray  # (N_cluster, N_ray)
    alpha_L: complex
    alpha_N: np.ndarray  # (N_cluster, N_ray)

    def row(self, n_tx):
        """Channel row ``h`` (length ``n_tx``).

        Steering vectors are taken unit-norm here, so each antenna sees the
        link's path gain and ``E|h|^2 = n_tx (p_los^2 beta_L + beta_N)``.
        """
        a_l = array_response(self.theta_L, n_tx).conj() / np.sqrt(n_tx)
        h_l = np.sqrt(n_tx) * self.alpha_L * a_l
        nc, nr = self.theta_N.shape
        a = array_response(self.theta_N.ravel(), n_tx).conj() / np.sqrt(n_tx)
        h_n = np.sqrt(n_tx / (nc * nr)) * (self.alpha_N.ravel() @ a)
        return self.p_los * np.sqrt(self.beta_L) * h_l + np.sqrt(self.beta_N) * h_n


def _cn(rng, size=None):
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def draw_link(params, d2d, d3d, theta_los, gain, rng, h_ut=None):
    """New link between the TBS and a terminal; ``gain`` scales both betas."""
    h_ut = params.tut_height if h_ut is None else h_ut
    pl_l = uma_path_loss(d2d, d3d, params.f_c, params.tbs_height, h_ut, True)
    pl_n = uma_path_loss(d2d, d3d, params.f_c, params.tbs_height, h_ut, False)
    beta_l = gain * 10.0 ** (-(pl_l + rng.normal(0.0, UMA_SF_LOS)) / 10.0)
    beta_n = gain * 10.0 ** (-(pl_n + rng.normal(0.0, UMA_SF_NLOS)) / 10.0)
    centers = theta_los + rng.normal(0.0, params.nlos_spread, (params.N_cluster, 1))
    rays = centers + rng.normal(0.0, params.ray_spread, (params.N_cluster, params.N_ray))
    return TerrestrialLink(
        p_los=float(uma_los_probability(d2d, h_ut)),
        beta_L=float(beta_l), beta_N=float(beta_n), theta_L=float(theta_los),
        theta_N=np.clip(rays, -90.0, 90.0),
        alpha_L=complex(_cn(rng)), alpha_N=_cn(rng, (params.N_cluster, params.N_ray)))


def age_link(link, rho, rng):
    """Redraw small-scale gains with correlation ``rho``; large scale frozen."""
    s = np.sqrt(1.0 - rho ** 2)
    return dataclasses.replace(
        link, alpha_L=complex(rho * link.alpha_L + s * _cn(rng)),
        alpha_N=rho * link.alpha_N + s * _cn(rng, link.alpha_N.shape))


def sensing_matrix(amp, theta_r, theta_t, n_rx, n_tx):
    """Rank-one bistatic response ``amp * a_r(theta_r) a_t(theta_t)^H``."""
    return amp * np.outer(array_response(theta_r, n_rx), array_response(theta_t, n_tx).conj())


def bistatic_gain(wavelength, rcs, d_tx, d_rx):
    """Two-way power gain of a point scatterer."""
    return wavelength ** 2 * rcs / ((4 * np.pi) ** 3 * np.asarray(d_tx) ** 2 * np.asarray(d_rx) ** 2)


@dataclass(frozen=True)
class CellChannels:
    """All channel state of one cell.

    Shapes: ``H`` (K, N_TX); ``h_sut`` (N_TX,); ``g_rad_vec`` (N_rad, N_RX);
    ``G_tar`` (N_tar, N_rad, N_RX, N_TX); ``G_cl`` (N_tar*N_cl, N_rad, N_RX, N_TX).
    The thermal noise power ``noise`` is common to TUTs, SUTs and radars.
    """
    H: np.ndarray
    h_sut: np.ndarray
    g_tut: np.ndarray
    g_sut: float
    g_rad: np.ndarray
    g_rad_vec: np.ndarray
    G_tar: np.ndarray
    G_cl: np.ndarray
    alpha_tar: np.ndarray
    alpha_cl: np.ndarray
    noise: float
    links: tuple = ()

    @property
    def K(self):
        return self.H.shape[0]

    @property
    def n_tar(self):
        return self.G_tar.shape[0]

    @property
    def n_tx(self):
        return self.H.shape[1]

    @property
    def G(self):
        """Target-only sensing channel per receiver, (N_rad, N_RX, N_TX)."""
        return self.G_tar.sum(axis=0)

    @property
    def G_cl_sum(self):
        return self.G_cl.sum(axis=0)

    @property
    def G_bar(self):
        return self.G + self.G_cl_sum

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def without_interference(self):
        """Both inter-system couplings removed."""
        return self.replace(g_tut=np.zeros_like(self.g_tut),
                            g_rad=np.zeros_like(self.g_rad),
                            g_rad_vec=np.zeros_like(self.g_rad_vec),
                            h_sut=np.zeros_like(self.h_sut))


def gen_terrestrial_channel(cell, params, link, rng):
    """Draw one terrestrial link (``link`` is a TUT index or ``"SUT"``).

    Returns ``(h, TerrestrialLink)``.
    """
    if link == "SUT":
        pos, theta = cell.sut, cell.theta_sut
        gain = float(db2lin(sut_gain_db(cell.sut_offset_tbs, params)))
    else:
        pos, theta, gain = cell.tut[link], cell.theta_tut[link], 1.0
    d2d = float(np.hypot(*(pos[:2] - cell.tbs[:2])))
    d3d = float(np.linalg.norm(pos - cell.tbs))
    lk = draw_link(params, d2d, d3d, theta, gain, rng, h_ut=pos[2])
    return lk.row(params.N_TX), lk


def satellite_links(cell, params, rng):
    """``(g_tut, g_sut, g_rad, g_rad_vec)`` with fresh shadowing draws."""
    xi = shadowing(rng, params.sigma_xi, params.K + 1 + cell.radars.shape[0])
    k = params.K
    g_tut = satellite_attenuation(cell.d_sat_tut, cell.phi_tut, 0.0, params, xi[:k])
    g_sut = float(satellite_attenuation(cell.d_sat_sut, cell.phi_sut,
                                        sut_gain_db(0.0, params), params, xi[k]))
    g_rad = satellite_attenuation(cell.d_sat_rad, cell.phi_rad, 0.0, params, xi[k + 1:])
    g_rad_vec = np.sqrt(g_rad)[:, None] * array_response(cell.theta_sat, params.N_RX)
    return g_tut, g_sut, g_rad, g_rad_vec


def gen_sensing_channels(cell, params, rng):
    """``(G_tar, G_cl, alpha_tar, alpha_cl)`` for one cell.

    Amplitudes are ``sqrt(alpha)`` with an independent uniform phase.
    """
    n_rad = cell.radars.shape[0]
    lam = params.wavelength
    shape = (params.N_tar, n_rad)
    rcs = db2lin(rng.normal(params.rcs_mean, params.rcs_std, shape))
    alpha = bistatic_gain(lam, rcs, cell.d_tx[:, None], cell.d_rx)
    ncl = cell.clutter.shape[0]
    rcs_cl = db2lin(rng.normal(params.rcs_mean + params.clutter_rcs_offset,
                               params.rcs_std, (ncl, n_rad)))
    alpha_cl = bistatic_gain(lam, rcs_cl, cell.d_tx_cl[:, None], cell.d_rx_cl)
    ph = np.exp(2j * np.pi * rng.random(shape))
    ph_cl = np.exp(2j * np.pi * rng.random((ncl, n_rad)))
    ar = array_response(cell.theta_r, params.N_RX)        # (N_tar, N_rad, N_RX)
    at = array_response(cell.theta_t, params.N_TX).conj()  # (N_tar, N_TX)
    G_tar = (np.sqrt(alpha) * ph)[:, :, None, None] * ar[..., None] * at[:, None, None, :]
    ar = array_response(cell.theta_r_cl, params.N_RX)
    at = array_response(cell.theta_t_cl, params.N_TX).conj()
    G_cl = (np.sqrt(alpha_cl) * ph_cl)[:, :, None, None] * ar[..., None] * at[:, None, None, :]
    return G_tar, G_cl, alpha, alpha_cl


def gen_cell_channels(cell, params, rng):
    """Every channel of one cell from a single generator."""
    links = [gen_terrestrial_channel(cell, params, k, rng)[1] for k in range(params.K)]
    links.append(gen_terrestrial_channel(cell, params, "SUT", rng)[1])
    g_tut, g_sut, g_rad, g_rad_vec = satellite_links(cell, params, rng)
    G_tar, G_cl, alpha, alpha_cl = gen_sensing_channels(cell, params, rng)
    return CellChannels(
        H=np.array([lk.row(params.N_TX) for lk in links[:-1]]),
        h_sut=links[-1].row(params.N_TX), g_tut=g_tut, g_sut=g_sut, g_rad=g_rad,
        g_rad_vec=g_rad_vec, G_tar=G_tar, G_cl=G_cl, alpha_tar=alpha,
        alpha_cl=alpha_cl, noise=params.noise_power, links=tuple(links))


def age_cell_channels(ch, params, rho, rng):
    """Terrestrial small-scale redraw between two CSI snapshots."""
    links = tuple(age_link(lk, rho, rng) for lk in ch.links)
    return ch.replace(H=np.array([lk.row(params.N_TX) for lk in links[:-1]]),
                      h_sut=links[-1].row(params.N_TX), links=links)


def perturb_satellite(ch, std_db, rng):
    """Prediction of the satellite gains with multiplicative log-normal error."""
    if std_db == 0.0:
        return ch
    e = shadowing(rng, std_db, ch.g_tut.size + 1 + ch.g_rad.size)
    k = ch.g_tut.size
    er = e[k + 1:]
    return ch.replace(g_tut=ch.g_tut * e[:k], g_sut=ch.g_sut * e[k], g_rad=ch.g_rad * er,
                      g_rad_vec=ch.g_rad_vec * np.sqrt(er)[:, None])


def draw_channels(geom, params):
    """Channels of every cell of ``geom`` from per-cell substreams."""
    return [gen_cell_channels(c, params, substream(geom.seed, CHANNEL, m))
            for m, c in enumerate(geom.cells)]


_ARRAYS = ("H", "h_sut", "g_tut", "g_rad", "g_rad_vec", "G_tar", "G_cl",
           "alpha_tar", "alpha_cl")


def dump_channels(path, channels):
    """Write a list of CellChannels to an ``.npz`` archive (bit exact)."""
    data = {"n_cells": np.array(len(channels))}
    for m, ch in enumerate(channels):
        for name in _ARRAYS:
            data[f"c{m}_{name}"] = getattr(ch, name)
        data[f"c{m}_g_sut"] = np.array(ch.g_sut)
        data[f"c{m}_noise"] = np.array(ch.noise)
    np.savez(path, **data)


def load_channels(path):
    with np.load(path) as z:
        out = []
        for m in range(int(z["n_cells"])):
            kw = {name: z[f"c{m}_{name}"] for name in _ARRAYS}
            out.append(CellChannels(g_sut=float(z[f"c{m}_g_sut"]),
                                    noise=float(z[f"c{m}_noise"]), **kw))
        return out
