import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arrowq import offline
from arrowq.requests import RequestSet, condense

from conftest import random_instance, seeds


def test_golden_optimum(golden):
    t, r = golden
    res = offline.opt_exact(t, r)
    assert res.total_cost == 2.0 and res.ordering == (0, 2, 1)
    assert offline.ordering_cost(r, (0, 1, 2)) == 4.0


def test_limits(golden):
    t, _ = golden
    r = RequestSet.from_points(t, [0] * 14, [0.0] + [float(i) for i in range(1, 14)])
    with pytest.raises(offline.SizeLimitExceeded):
        offline.opt_exact(t, r, limit=12)
    with pytest.raises(offline.SizeLimitExceeded):
        offline.min_path(np.zeros((11, 11)), "bruteforce", 18)
    with pytest.raises(offline.OfflineError):
        offline.min_path(np.zeros((3, 3)), "magic")


def test_lower_bound_needs_condensed(golden):
    t, _ = golden
    r = RequestSet.from_points(t, [0, 1], [0.0, 50.0])
    with pytest.raises(offline.NotCondensedError):
        offline.opt_lower_bound(t, r)
    assert offline.opt_lower_bound(t, condense(r)).total_cost == pytest.approx(4.0 / 12)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_bruteforce_equals_dp(seed):
    t, r = random_instance(seed, max_requests=9)
    a = offline.opt_exact(t, r, method="bruteforce")
    b = offline.opt_exact(t, r, method="dp")
    assert a.total_cost == b.total_cost
    m = offline.offline_latency_matrix(r)
    assert offline.ordering_cost(r, b.ordering, m) == b.total_cost


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_bounds_sandwich(seed):
    t, r = random_instance(seed, max_requests=9)
    rc = condense(r)
    ex = offline.opt_exact(t, rc).total_cost
    assert offline.opt_lower_bound(t, rc).total_cost <= ex + 1e-9
    assert ex <= offline.opt_upper_bound_nn(t, rc).total_cost + 1e-9


def test_exhaustive_oracle_small():
    # independent oracle: plain loop over orderings
    t, r = random_instance(11, max_requests=6)
    m = offline.offline_latency_matrix(r)
    best = min(sum(m[a, b] for a, b in zip((0,) + p, p)) for p in itertools.permutations(range(1, len(r))))
    assert offline.opt_exact(t, r).total_cost == pytest.approx(best, abs=1e-12)


def test_kruskal_tie_break():
    w = np.ones((3, 3))
    assert offline.kruskal(w) == [(0, 1), (0, 2)]


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_mst_walk_and_min_path(seed):
    t, r = random_instance(seed, max_requests=8)
    mst = offline.manhattan_mst(t, r)
    assert len(mst.edges) == len(r) - 1
    walk = offline.doubled_tree_walk(mst, len(r))
    assert sorted(walk) == list(range(len(r))) and walk[0] == 0
    path = offline.min_ordering_manhattan(t, r)
    assert mst.total_manhattan <= path.total_cost + 1e-9
    assert path.total_cost <= offline.manhattan_path_cost(r, walk) + 1e-9
