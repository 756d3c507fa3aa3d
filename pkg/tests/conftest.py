import numpy as np
import pytest

from bpr.synthgen import SynthConfig, generate_corpus


@pytest.fixture(scope="session")
def corpus():
    """Default synthetic corpus: 20 scenes, seed 42."""
    return generate_corpus(SynthConfig(seed=42), 20)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_mask(rng, h, w, p=0.5):
    return rng.random((h, w)) < p


def blob(h, w, cx, cy, r):
    yy, xx = np.mgrid[0:h, 0:w]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
