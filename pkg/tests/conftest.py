import numpy as np
import pytest
from hypothesis import strategies as st

from arrowq.hst import Hst, random_hst
from arrowq.requests import RequestSet


def golden_tree() -> Hst:
    # root 0 at level 1, leaves u=1 (point 0) and v=2 (point 1)
    return Hst([-1, 0, 0], [0.0, 1.0, 1.0], [1, 0, 0], {0: 1, 1: 2})


def golden_requests(t=None) -> RequestSet:
    t = t or golden_tree()
    return RequestSet.from_points(t, [0, 1, 0], [0.0, 0.0, 1.0])


@pytest.fixture
def golden():
    t = golden_tree()
    return t, golden_requests(t)


def random_instance(seed: int, max_height: int = 4, max_requests: int = 10, spread=(1, 5, 20, 60), rounded=True):
    rng = np.random.default_rng(seed)
    h = int(rng.integers(1, max_height + 1))
    t = random_hst(h, rng, 3)
    k = int(rng.integers(2, max_requests + 1))
    pts = [0] + rng.integers(0, len(t.leaf_map), k - 1).tolist()
    ts = rng.random(k - 1) * rng.choice(spread)
    if rounded:
        ts = np.round(ts, 1)
    return t, RequestSet.from_points(t, pts, [0.0] + ts.tolist())


seeds = st.integers(min_value=0, max_value=2**31 - 1)
