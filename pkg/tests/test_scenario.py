import numpy as np
import pytest

from istnsim.scenario import (ParamError, SystemParams, coerce_field, generate_geometry,
                              load_params, params_from_mapping, radar_layout, substream,
                              validate_params)


def test_defaults_validate():
    p = SystemParams()
    assert validate_params(p) is p
    assert np.isfinite(p.noise_power) and p.noise_power > 0


def test_noise_power_matches_dbm_formula():
    p = SystemParams()
    dbm = -174 + 10 * np.log10(100e6) + 8
    assert p.noise_power == pytest.approx(1e-3 * 10 ** (dbm / 10), rel=1e-12)


def test_more_targets_than_receivers_rejected():
    with pytest.raises(ParamError, match="N_tar exceeds N_rad"):
        validate_params(SystemParams(N_tar=5, N_rad=4))


def test_zero_satellite_budget_rejected():
    with pytest.raises(ParamError, match="P_LEO must be positive"):
        validate_params(SystemParams(P_LEO=0.0))


def test_every_problem_is_reported():
    with pytest.raises(ParamError) as err:
        validate_params(SystemParams(P_LEO=-1.0, K=0, aging_rho=2.0))
    text = str(err.value)
    for word in ("P_LEO", "K must", "aging_rho"):
        assert word in text
    assert len(err.value.problems) == 3


def test_coerce_field_types():
    assert coerce_field("K", "3") == 3
    assert coerce_field("P_BS", "1e1") == 10.0
    assert coerce_field("csi_aging", "off") is False
    with pytest.raises(ParamError):
        coerce_field("K", "three")
    with pytest.raises(ParamError):
        coerce_field("nope", "1")


def test_load_params(tmp_path):
    path = tmp_path / "p.ini"
    path.write_text("[params]\nK = 2\nP_BS = 1.5\n")
    p = load_params(path)
    assert p.K == 2 and p.P_BS == 1.5
    assert params_from_mapping({"K": "2", "P_BS": "1.5"}) == p


def test_substream_independent_of_extra_keys():
    a = substream(7, 1, 2).normal(size=4)
    assert np.array_equal(a, substream(7, 1, 2).normal(size=4))
    assert not np.array_equal(a, substream(7, 1, 3).normal(size=4))


def test_geometry_deterministic():
    p = SystemParams(M=2)
    g1, g2 = generate_geometry(p, 5), generate_geometry(p, 5)
    for c1, c2 in zip(g1.cells, g2.cells):
        assert np.array_equal(c1.tut, c2.tut)
        assert np.array_equal(c1.sat, c2.sat)


def test_geometry_changes_with_seed():
    p = SystemParams(M=1)
    a = generate_geometry(p, 1).cells[0].tut
    b = generate_geometry(p, 2).cells[0].tut
    assert not np.allclose(a, b)


def test_radar_positions_for_four_receivers():
    p = SystemParams(r_sens=50.0)
    expect = [(25, 0), (0, 25), (-25, 0), (0, -25)]
    assert np.allclose(radar_layout(p), expect)
    cell = generate_geometry(p, 0).cells[0]
    assert np.allclose(cell.radars[:, :2] - cell.tbs[:2], expect)


def test_radar_circle_for_other_counts():
    p = SystemParams(N_rad=6, N_tar=2, r_sens=60.0)
    pos = radar_layout(p)
    assert pos.shape == (6, 2)
    assert np.allclose(np.hypot(*pos.T), 30.0)


@pytest.mark.parametrize("seed", range(5))
def test_geometry_invariants(seed):
    p = SystemParams(M=2)
    for cell in generate_geometry(p, seed).cells:
        ground = lambda x: np.hypot(*(np.atleast_2d(x)[:, :2] - cell.tbs[:2]).T)
        assert np.all(ground(cell.tut) <= p.cell_radius)
        assert np.all(ground(cell.targets) <= p.r_sens)
        assert ground(cell.sut)[0] <= p.cell_radius
        for arr in (cell.theta_tut, cell.theta_t, cell.theta_r, cell.theta_sat):
            assert np.all(np.abs(arr) <= 90.0)
        assert p.sat_elevation_min <= cell.elevation <= p.sat_elevation_max
        # the cell sits inside the spot beam centered on its SUT
        ground_sat = np.hypot(*(cell.sat[:2] - cell.sut[:2]))
        assert ground(cell.sut)[0] <= p.spotbeam_radius
        assert ground_sat > 0


def test_monostatic_geometry_has_one_receiver_at_tbs():
    p = SystemParams(N_rad=1, N_tar=4, N_RX=16, monostatic=True)
    cell = generate_geometry(p, 0).cells[0]
    assert cell.radars.shape == (1, 3)
    assert np.allclose(cell.radars[0], cell.tbs)
