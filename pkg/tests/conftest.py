import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_off_axis(rng, n, r_min=0.01, box=1.5):
    """Uniform points in [-box, box]^3 with cylindrical radius above r_min."""
    out = []
    while sum(len(o) for o in out) < n:
        p = rng.uniform(-box, box, (2 * n, 3))
        out.append(p[np.hypot(p[:, 0], p[:, 1]) > r_min])
    return np.concatenate(out)[:n]
