import numpy as np
import pytest

from voxelad.grids import HeadMask, MultiChannelVolume


def make_volume(rng, channels=3, dims=(6, 5, 4), spacing=(1.0, 1.0, 1.0)):
    data = rng.standard_normal((channels, *dims)).astype(np.float32)
    return MultiChannelVolume(data, spacing=spacing)


def make_mask(dims=(6, 5, 4), frac=0.6, rng=None):
    rng = rng or np.random.default_rng(99)
    data = rng.random(dims) < frac
    data.reshape(-1)[0] = True  # never empty
    return HeadMask(data)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_mask():
    return make_mask()
