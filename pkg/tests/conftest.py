import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fissura.backend import blockstats_descriptor, extract_features, load_backend
from fissura.imaging import PreprocessConfig, preprocess, resize


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiles_to_features(tiles, backend, tile_size=224):
    """Resize, preprocess, and embed raw uint8 tiles."""
    pp = PreprocessConfig(target_tile_size=tile_size,
                          channel_means=backend.descriptor.channel_means,
                          channel_order=backend.descriptor.channel_order)
    prepped = [preprocess(resize(t, tile_size), pp) for t in tiles]
    return extract_features(backend, prepped)


@pytest.fixture(scope="session")
def blockstats_backend():
    return load_backend(blockstats_descriptor())
