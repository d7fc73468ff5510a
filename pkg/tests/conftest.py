import numpy as np
import pytest

from factories import make_bundle


@pytest.fixture
def small_bundle():
    rng = np.random.default_rng(42)
    specs = []
    for i in range(2):
        w = rng.integers(-6, 7, size=(12, 12))
        w[w == 0] = 3  # keep every position scoreable
        acts = rng.uniform(0.5, 4.0, 12)
        specs.append((f"l{i}", w, acts))
    return make_bundle(*specs)
