"""System parameters and per-cell network geometry.

Every cell lives in its own local tangent plane with the TBS at the origin.
Cells only couple through the satellite power budget, so their geometries
are drawn independently.
"""

import configparser
import dataclasses
from dataclasses import dataclass, field

import numpy as np

# rng substream tags (see ``substream``)
GEOMETRY = 0
CHANNEL = 1
AGING = 2
ASSOC = 3
PREDICTION = 4


def substream(seed, *keys):
    """Independent generator for ``(seed, *keys)``; adding keys never
    perturbs other streams."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def db2lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class SystemParams:
    """Scalar constants of one simulation run.

    Gains are in dBi, powers in W, angles in degrees, distances in m.
    """
    f_c: float = 15e9
    bandwidth: float = 100e6
    c: float = 299792458.0
    noise_figure: float = 8.0
    noise_density: float = -174.0  # dBm/Hz
    sat_altitude: float = 500e3
    sat_elevation_min: float = 60.0
    sat_elevation_max: float = 90.0
    spotbeam_radius: float = 10e3
    G_s: float = 38.0
    G_main: float = 34.2
    G_side: float = 21.2
    phi_th: float = 2.0
    phi_3dB: float = 1.0
    sigma_xi: float = 4.0
    P_LEO: float = 200.0
    M: int = 4
    K: int = 5
    N_TX: int = 30
    N_RX: int = 4
    N_tar: int = 4
    N_rad: int = 4
    N_cl: int = 3
    N_cluster: int = 6
    N_ray: int = 4
    cell_radius: float = 200.0
    r_sens: float = 50.0
    tbs_height: float = 10.0
    tut_height: float = 1.5
    radar_height: float = 10.0
    target_height: float = 1.5
    min_ground_distance: float = 10.0
    sut_min_distance: float = 20.0
    P_BS: float = 10 ** 0.5  # 35 dBm
    R_min_S: float = 3.0
    SCNR_min: float = -10.0  # dB
    delta_sat: float = 5.0
    delta_tar: float = 5.0
    # extensions, all off or neutral by default
    nlos_spread: float = 20.0
    ray_spread: float = 2.0
    rcs_mean: float = 0.0  # dBsm
    rcs_std: float = 3.0
    clutter_rcs_offset: float = -10.0
    clutter_inner: float = 5.0
    clutter_outer: float = 15.0
    aging_rho: float = 0.0
    csi_aging: bool = True
    sat_prediction_std: float = 0.0  # dB
    monostatic: bool = False
    max_rx_antennas: int = 256
    wmmse_tol: float = 1e-4
    wmmse_max_iter: int = 100
    eps_grid: int = 50
    rng_seed: int = 0

    @property
    def wavelength(self):
        return self.c / self.f_c

    @property
    def noise_power(self):
        """Thermal noise in W, shared by TUTs, SUTs and radar receivers."""
        dbm = self.noise_density + 10.0 * np.log10(self.bandwidth) + self.noise_figure
        return float(10.0 ** ((dbm - 30.0) / 10.0))

    @property
    def scnr_min_lin(self):
        return float(db2lin(self.SCNR_min))

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


class ParamError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


_POSITIVE = ("f_c", "bandwidth", "c", "sat_altitude", "spotbeam_radius",
             "phi_th", "phi_3dB", "P_LEO", "M", "K", "N_TX", "N_RX", "N_tar",
             "N_rad", "N_cl", "N_cluster", "N_ray", "cell_radius", "r_sens",
             "tbs_height", "tut_height", "radar_height", "target_height",
             "P_BS", "wmmse_tol", "wmmse_max_iter", "max_rx_antennas")


def validate_params(raw):
    """Return ``raw`` unchanged or raise ``ParamError`` naming each bad field."""
    bad = []
    for name in _POSITIVE:
        v = getattr(raw, name)
        if not (np.isfinite(v) and v > 0):
            bad.append(f"{name} must be positive")
    for name in ("sigma_xi", "R_min_S", "delta_sat", "delta_tar", "rcs_std",
                 "sat_prediction_std", "min_ground_distance", "sut_min_distance"):
        v = getattr(raw, name)
        if not (np.isfinite(v) and v >= 0):
            bad.append(f"{name} must be non-negative")
    if raw.N_tar > raw.N_rad and not raw.monostatic:
        bad.append("N_tar exceeds N_rad")
    if raw.monostatic and raw.N_rad != 1:
        bad.append("monostatic requires N_rad = 1")
    if not 0.0 < raw.sat_elevation_min <= raw.sat_elevation_max <= 90.0:
        bad.append("sat_elevation_min/sat_elevation_max must satisfy 0 < min <= max <= 90")
    if raw.cell_radius > raw.spotbeam_radius:
        bad.append("cell_radius exceeds spotbeam_radius")
    if raw.sut_min_distance >= raw.cell_radius:
        bad.append("sut_min_distance must be below cell_radius")
    if raw.min_ground_distance >= min(raw.cell_radius, raw.r_sens):
        bad.append("min_ground_distance must be below cell_radius and r_sens")
    if not 0.0 <= raw.clutter_inner < raw.clutter_outer:
        bad.append("clutter_inner/clutter_outer must satisfy 0 <= inner < outer")
    if not 0.0 <= raw.aging_rho <= 1.0:
        bad.append("aging_rho must lie in [0, 1]")
    if raw.N_RX > raw.max_rx_antennas:
        bad.append("N_RX exceeds max_rx_antennas")
    if raw.eps_grid < 2:
        bad.append("eps_grid must be at least 2")
    sigma2 = raw.noise_power
    if not (np.isfinite(sigma2) and sigma2 > 0):
        bad.append("noise_density/bandwidth/noise_figure give a non-positive noise power")
    if bad:
        raise ParamError(bad)
    return raw


_FIELDS = {f.name: f for f in dataclasses.fields(SystemParams)}


def coerce_field(name, text):
    """Parse ``text`` as the type of SystemParams field ``name``."""
    if name not in _FIELDS:
        raise ParamError([f"unknown parameter {name}"])
    kind = type(getattr(SystemParams(), name))
    try:
        if kind is bool:
            low = str(text).strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(text)
            return low in ("1", "true", "yes", "on")
        if kind is int:
            return int(float(text))
        return float(text)
    except ValueError:
        raise ParamError([f"{name} has invalid value {text!r}"]) from None


def params_from_mapping(mapping, base=None):
    base = SystemParams() if base is None else base
    kw = {k: coerce_field(k, v) for k, v in mapping.items()}
    return base.replace(**kw)


def load_params(path):
    """Read the ``[params]`` section of an INI file."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if not cp.read(path):
        raise ParamError([f"cannot read {path}"])
    section = cp["params"] if cp.has_section("params") else {}
    return validate_params(params_from_mapping(dict(section)))


@dataclass(frozen=True)
class CellGeometry:
    """Positions (3-vectors, m) and the derived distances/angles of one cell.

    Angles are in degrees relative to array broadside; ``phi_*`` are offsets
    seen from the satellite between the beam center (the SUT) and each node.
    """
    tbs: np.ndarray
    tut: np.ndarray
    sut: np.ndarray
    targets: np.ndarray
    radars: np.ndarray
    clutter: np.ndarray
    sat: np.ndarray
    tbs_axis: np.ndarray
    radar_axes: np.ndarray
    elevation: float
    d_sat_tut: np.ndarray = field(init=False)
    d_sat_sut: float = field(init=False)
    d_sat_rad: np.ndarray = field(init=False)
    phi_tut: np.ndarray = field(init=False)
    phi_rad: np.ndarray = field(init=False)
    phi_sut: float = field(init=False)
    sut_offset_tbs: float = field(init=False)
    theta_tut: np.ndarray = field(init=False)
    theta_sut: float = field(init=False)
    theta_sat: np.ndarray = field(init=False)
    theta_r: np.ndarray = field(init=False)
    theta_t: np.ndarray = field(init=False)
    theta_r_cl: np.ndarray = field(init=False)
    theta_t_cl: np.ndarray = field(init=False)
    d_tx: np.ndarray = field(init=False)
    d_rx: np.ndarray = field(init=False)
    d_tx_cl: np.ndarray = field(init=False)
    d_rx_cl: np.ndarray = field(init=False)

    def __post_init__(self):
        put = lambda k, v: object.__setattr__(self, k, v)
        put("d_sat_tut", _dist(self.sat, self.tut))
        put("d_sat_sut", float(_dist(self.sat, self.sut)[0]))
        put("d_sat_rad", _dist(self.sat, self.radars))
        center = self.sut
        put("phi_tut", _offset(self.sat, center, self.tut))
        put("phi_rad", _offset(self.sat, center, self.radars))
        put("phi_sut", float(_offset(self.sat, center, self.sut)[0]))
        # SUT boresight points at the satellite; offset toward the TBS
        put("sut_offset_tbs", float(_offset(self.sut, self.sat, self.tbs)[0]))
        put("theta_tut", _aoa(self.tbs, self.tbs_axis, self.tut))
        put("theta_sut", float(_aoa(self.tbs, self.tbs_axis, self.sut)[0]))
        put("theta_t", _aoa(self.tbs, self.tbs_axis, self.targets))
        put("theta_t_cl", _aoa(self.tbs, self.tbs_axis, self.clutter))
        nr = self.radars.shape[0]
        put("theta_sat", np.array([_aoa(self.radars[n], self.radar_axes[n], self.sat)[0]
                                   for n in range(nr)]))
        put("theta_r", np.stack([_aoa(self.radars[n], self.radar_axes[n], self.targets)
                                 for n in range(nr)], axis=1))
        put("theta_r_cl", np.stack([_aoa(self.radars[n], self.radar_axes[n], self.clutter)
                                    for n in range(nr)], axis=1))
        put("d_tx", _dist(self.tbs, self.targets))
        put("d_rx", np.stack([_dist(self.radars[n], self.targets) for n in range(nr)], axis=1))
        put("d_tx_cl", _dist(self.tbs, self.clutter))
        put("d_rx_cl", np.stack([_dist(self.radars[n], self.clutter) for n in range(nr)],
                                axis=1))


@dataclass(frozen=True)
class Geometry:
    cells: tuple
    seed: int


def _dist(a, b):
    return np.linalg.norm(np.atleast_2d(b) - a, axis=-1)


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _offset(apex, ref, pts):
    """Angle (deg) at ``apex`` between the directions to ``ref`` and ``pts``."""
    u = _unit(ref - apex)
    v = _unit(np.atleast_2d(pts) - apex)
    cosang = np.clip(v @ u, -1.0, 1.0)
    return np.degrees(np.arccos(cosang))


def _aoa(origin, axis, pts):
    """Cone angle from broadside of a ULA lying along ``axis``."""
    v = _unit(np.atleast_2d(pts) - origin)
    return np.degrees(np.arcsin(np.clip(v @ axis, -1.0, 1.0)))


def _disk(rng, n, r_max, r_min=0.0):
    r = np.sqrt(rng.uniform(r_min ** 2, r_max ** 2, n))
    a = rng.uniform(0.0, 2 * np.pi, n)
    return np.column_stack([r * np.cos(a), r * np.sin(a)])


def radar_layout(params):
    """Ground positions of the radar receivers relative to the TBS."""
    if params.monostatic:
        return np.zeros((1, 2))
    rad = params.r_sens / 2.0
    if params.N_rad == 4:
        return np.array([[rad, 0.0], [0.0, rad], [-rad, 0.0], [0.0, -rad]])
    a = 2 * np.pi * np.arange(params.N_rad) / params.N_rad
    return rad * np.column_stack([np.cos(a), np.sin(a)])


def _cell(params, rng):
    h = lambda xy, z: np.column_stack([xy, np.full(len(xy), z)])
    p = params
    tbs = np.array([0.0, 0.0, p.tbs_height])
    tut = h(_disk(rng, p.K, p.cell_radius, p.min_ground_distance), p.tut_height)
    sut = h(_disk(rng, 1, p.cell_radius, p.sut_min_distance), p.tut_height)[0]
    targets = h(_disk(rng, p.N_tar, p.r_sens, p.min_ground_distance), p.target_height)
    offs = _disk(rng, p.N_tar * p.N_cl, p.clutter_outer, p.clutter_inner)
    clutter = h(np.repeat(targets[:, :2], p.N_cl, axis=0) + offs, p.target_height)
    ground = radar_layout(p)
    if p.monostatic:
        radars = tbs[None, :].copy()
        axes = np.array([[1.0, 0.0, 0.0]])
    else:
        radars = h(ground, p.radar_height)
        radial = _unit(ground)
        axes = np.column_stack([-radial[:, 1], radial[:, 0], np.zeros(len(ground))])
    el = rng.uniform(p.sat_elevation_min, p.sat_elevation_max)
    az = rng.uniform(0.0, 2 * np.pi)
    slant = p.sat_altitude / np.sin(np.radians(el))
    e = np.radians(el)
    sat = tbs * [1, 1, 0] + slant * np.array([np.cos(e) * np.cos(az),
                                               np.cos(e) * np.sin(az), np.sin(e)])
    return CellGeometry(tbs=tbs, tut=tut, sut=sut, targets=targets, radars=radars,
                        clutter=clutter, sat=sat, tbs_axis=np.array([1.0, 0.0, 0.0]),
                        radar_axes=axes, elevation=float(el))


def generate_geometry(params, seed):
    """Deterministic geometry for all ``M`` cells of one Monte Carlo drop."""
    cells = tuple(_cell(params, substream(seed, GEOMETRY, m)) for m in range(params.M))
    return Geometry(cells=cells, seed=int(seed))
