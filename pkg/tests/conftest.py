import numpy as np
import pytest

from lidf.corpus import Manifest, synth_corpus


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory) -> Manifest:
    """6 synthetic languages x 8 clips; shared by the fast tests."""
    root = tmp_path_factory.mktemp("corpus_small")
    return synth_corpus(root, n_per_class=8, seed=7)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def spaced_values(rng: np.random.Generator, shape, spacing: float = 0.1):
    """Random permutation of an evenly spaced grid: no two entries closer
    than `spacing` and none at 0, keeping finite differences away from the
    kinks of max/relu."""
    n = int(np.prod(shape))
    values = (np.arange(n) - n / 2 + 0.5) * spacing
    return rng.permutation(values).reshape(shape)
