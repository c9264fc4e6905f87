import numpy as np
import pytest

from voxelad_ae import AEConfig


@pytest.fixture
def tiny_config():
    return AEConfig(channels=2, dims=(8, 8, 8), bottleneck=32, seed=3, max_epochs=5)


def random_zmaps(rng, n, channels=2, dims=(8, 8, 8)):
    import torch

    return torch.from_numpy(
        rng.standard_normal((n, channels, *dims)).astype(np.float32)
    )
