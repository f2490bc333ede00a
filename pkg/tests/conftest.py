import numpy as np
import pytest

from asymcity.encoder import EncoderConfig, init_params
from asymcity.morphology import Building, City, CityMeta, StreetNetwork


def make_scene(buildings, nodes=(), edges=()):
    """City from raw (footprint, height) pairs; no invariant checks."""
    bs = [Building(i, [tuple(map(float, p)) for p in fp], float(h)) for i, (fp, h) in enumerate(buildings)]
    return City(bs, StreetNetwork(list(nodes), list(edges)), CityMeta("imported", "imported", 0))


@pytest.fixture
def tiny_cfg():
    return EncoderConfig(n_origins=2, input_dim=2, seq_len=4, lstm_hidden=3, origin_embed_dim=6,
                         latent_dim=6, shared_dim=3, fusion_hidden=5, decoder_hidden=5)


@pytest.fixture
def tiny_params(tiny_cfg):
    # perturb the zero biases so every code path carries signal
    rng = np.random.default_rng(11)
    p = init_params(tiny_cfg, 5)
    return {n: v + rng.normal(0.0, 0.3, v.shape) for n, v in p.items()}


@pytest.fixture
def tiny_batch():
    rng = np.random.default_rng(12)
    return rng.uniform(-1, 1, (4, 4, 2)), np.array([0, 1, 0, 1])
