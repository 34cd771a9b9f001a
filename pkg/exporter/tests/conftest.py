import numpy as np
import pytest

from feature_exporter.vgg import load_backbone


@pytest.fixture(scope="session")
def backbone():
    """One seeded random-init backbone shared by the whole run.

    Random weights keep the suite self-contained: the pretrained checkpoint
    needs a download that offline hosts cannot perform, and seeded random
    convolutions are deterministic and discriminative enough to drive the
    matching engine.
    """
    return load_backbone(weights="random", seed=3)


@pytest.fixture()
def tile_image():
    """128x128 mosaic of 8px random tiles: locally distinctive content."""
    rng = np.random.default_rng(100)
    return np.kron(rng.integers(0, 256, (16, 16, 3)), np.ones((8, 8, 1))).astype(np.uint8)
