import numpy as np
import pytest

from istnsim.association import associate_baseline
from istnsim.channel import draw_channels
from istnsim.scenario import SystemParams, generate_geometry


def small_params(**kw):
    base = dict(N_TX=6, K=2, N_tar=2, N_rad=4, N_RX=2, M=1, N_cl=1)
    base.update(kw)
    return SystemParams(**base)


def cell(params, seed=0):
    geom = generate_geometry(params, seed)
    ch = draw_channels(geom, params)[0]
    return geom.cells[0], ch, associate_baseline("nearest", ch.alpha_tar)


def random_beamformer(rng, n_tx, cols, power):
    F = rng.normal(size=(n_tx, cols)) + 1j * rng.normal(size=(n_tx, cols))
    return F * np.sqrt(power / np.sum(abs(F) ** 2))


@pytest.fixture
def params():
    return small_params()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
