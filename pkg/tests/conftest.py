import struct

import pytest

from flipbench import flipmodel


def bits_of(x):
    """IEEE-754 pattern via struct, independent of numpy views."""
    return struct.unpack(">Q", struct.pack(">d", x))[0]


def float_of(bits):
    return struct.unpack(">d", struct.pack(">Q", bits))[0]


@pytest.fixture(scope="session")
def sim_schemes_dir(tmp_path_factory):
    cfg = flipmodel.SimConfig(schemes=flipmodel.default_schemes(), noise_rel=0.0, seed=3)
    return flipmodel.simulate_experiment(cfg, tmp_path_factory.mktemp("sim_schemes")), cfg


@pytest.fixture(scope="session")
def sim_masks_dir(tmp_path_factory):
    cfg = flipmodel.SimConfig(schemes=flipmodel.mask_schemes(seed=3), noise_rel=0.0, seed=3)
    return flipmodel.simulate_experiment(cfg, tmp_path_factory.mktemp("sim_masks")), cfg
