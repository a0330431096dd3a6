"""Optimal offline queueing cost: exact solvers, Manhattan MST bounds and the NN heuristic."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .requests import RequestSet, is_condensed

BRUTE_FORCE_MAX = 9
DEFAULT_EXACT_LIMIT = 12
HARD_EXACT_LIMIT = 18


class OfflineError(ValueError):
    pass


class SizeLimitExceeded(OfflineError):
    pass


class NotCondensedError(OfflineError):
    pass


@dataclass(frozen=True)
class OfflineResult:
    ordering: tuple[int, ...]
    total_cost: float
    method: str
    certificate: object = None


@dataclass(frozen=True)
class RequestTree:
    edges: tuple[tuple[int, int], ...]
    total_manhattan: float
    anchors: tuple = field(default=())

    def adjacency(self, k: int) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(k)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return adj


def _on(r: RequestSet, t) -> RequestSet:
    if t is None or t is r.space:
        return r
    return r.relocate(t, r.nodes)


def offline_latency_matrix(r: RequestSet) -> np.ndarray:
    """``L[a, b]``: cost of ordering request ``b`` right after ``a``."""
    t = r.time_array
    return np.maximum(r.dist, t[:, None] - t[None, :])


def ordering_cost(r: RequestSet, ordering, matrix: np.ndarray | None = None) -> float:
    m = offline_latency_matrix(r) if matrix is None else matrix
    total = 0.0
    for a, b in zip(ordering, ordering[1:]):
        total += float(m[a, b])
    return total


def manhattan_path_cost(r: RequestSet, ordering) -> float:
    return ordering_cost(r, ordering, r.manhattan_matrix())


@lru_cache(maxsize=None)
def _permutations(m: int) -> np.ndarray:
    if m == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(itertools.permutations(range(1, m + 1))), dtype=np.int64)


def _path_bruteforce(c: np.ndarray) -> tuple[float, tuple[int, ...]]:
    k = c.shape[0]
    perms = _permutations(k - 1)
    if k == 1:
        return 0.0, (0,)
    total = c[0, perms[:, 0]].copy()
    for s in range(1, k - 1):
        total += c[perms[:, s - 1], perms[:, s]]
    best = int(np.argmin(total))
    return float(total[best]), (0,) + tuple(int(x) for x in perms[best])


def _path_dp(c: np.ndarray) -> tuple[float, tuple[int, ...]]:
    """Held-Karp over subsets of the non-dummy requests; path starts at 0."""
    k = c.shape[0]
    m = k - 1
    if m == 0:
        return 0.0, (0,)
    full = (1 << m) - 1
    dp = np.full((1 << m, m), np.inf)
    for j in range(m):
        dp[1 << j, j] = c[0, j + 1]
    sub = c[1:, 1:]
    masks = np.arange(1 << m)
    pop = np.zeros(1 << m, dtype=np.int64)
    for j in range(m):
        pop += (masks >> j) & 1
    for size in range(1, m):
        layer = masks[pop == size]
        for j in range(m):
            src = layer[(layer & (1 << j)) == 0]
            if src.size == 0:
                continue
            cand = (dp[src] + sub[:, j][None, :]).min(axis=1)
            dst = src | (1 << j)
            dp[dst, j] = np.minimum(dp[dst, j], cand)
    last = int(np.argmin(dp[full]))
    best = float(dp[full, last])
    # walk back through states that reproduce the optimum exactly
    path = [last]
    mask = full
    while mask & (mask - 1):
        j = path[-1]
        prev_mask = mask & ~(1 << j)
        vals = dp[prev_mask] + sub[:, j]
        ok = [i for i in range(m) if (prev_mask >> i) & 1 and vals[i] == dp[mask, j]]
        path.append(ok[0])
        mask = prev_mask
    return best, (0,) + tuple(i + 1 for i in reversed(path))


def min_path(c: np.ndarray, method: str = "auto", limit: int = DEFAULT_EXACT_LIMIT):
    """Cheapest ordering starting at 0 under pairwise successor costs ``c``."""
    k = c.shape[0]
    if k > min(int(limit), HARD_EXACT_LIMIT):
        raise SizeLimitExceeded(f"{k} requests exceeds the exact limit {min(int(limit), HARD_EXACT_LIMIT)}")
    if method == "auto":
        method = "bruteforce" if k <= BRUTE_FORCE_MAX else "dp"
    if method == "bruteforce":
        if k > BRUTE_FORCE_MAX + 1:
            raise SizeLimitExceeded(f"brute force limited to {BRUTE_FORCE_MAX + 1} requests, got {k}")
        return _path_bruteforce(c)
    if method == "dp":
        return _path_dp(c)
    raise OfflineError(f"unknown exact method {method!r}")


def opt_exact(t, r: RequestSet, limit: int = DEFAULT_EXACT_LIMIT, method: str = "auto") -> OfflineResult:
    r = _on(r, t)
    if method == "auto":
        method = "bruteforce" if len(r) <= BRUTE_FORCE_MAX else "dp"
    cost, ordering = min_path(offline_latency_matrix(r), method, limit)
    return OfflineResult(ordering, cost, f"exact-{method}", None)


class _DisjointSet:
    def __init__(self, n: int):
        self.p = list(range(n))

    def find(self, x: int) -> int:
        while self.p[x] != x:
            self.p[x] = self.p[self.p[x]]
            x = self.p[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.p[max(ra, rb)] = min(ra, rb)
        return True


def kruskal(weights: np.ndarray, candidates=None) -> list[tuple[int, int]]:
    """Minimum spanning forest; ties broken by ``(weight, i, j)``."""
    k = weights.shape[0]
    if candidates is None:
        iu, ju = np.triu_indices(k, 1)
        candidates = zip(iu.tolist(), ju.tolist())
    cand = sorted(((float(weights[a, b]), min(a, b), max(a, b)) for a, b in candidates))
    ds = _DisjointSet(k)
    out = []
    for _, a, b in cand:
        if ds.union(a, b):
            out.append((a, b))
    return out


def tree_weight(edges, weights: np.ndarray) -> float:
    return float(sum(weights[a, b] for a, b in edges))


def manhattan_mst(t, r: RequestSet) -> RequestTree:
    r = _on(r, t)
    cm = r.manhattan_matrix()
    edges = kruskal(cm)
    return RequestTree(tuple(edges), tree_weight(edges, cm))


def opt_lower_bound(t, r: RequestSet) -> OfflineResult:
    """Manhattan MST weight divided by 12; valid only for condensed sets."""
    r = _on(r, t)
    ok, witness = is_condensed(r)
    if not ok:
        raise NotCondensedError(f"request set is not condensed; gap between requests {witness}")
    mst = manhattan_mst(None, r)
    return OfflineResult((), mst.total_manhattan / 12.0, "lower-bound-mst", mst.edges)


def nn_chain(c: np.ndarray) -> tuple[int, ...]:
    k = c.shape[0]
    chain = [0]
    left = set(range(1, k))
    while left:
        cur = chain[-1]
        nxt = min(left, key=lambda j: (c[cur, j], j))
        chain.append(nxt)
        left.remove(nxt)
    return tuple(chain)


def opt_upper_bound_nn(t, r: RequestSet) -> OfflineResult:
    r = _on(r, t)
    m = offline_latency_matrix(r)
    chain = nn_chain(m)
    return OfflineResult(chain, ordering_cost(r, chain, m), "upper-bound-nn", chain)


def doubled_tree_walk(tree: RequestTree, k: int, root: int = 0) -> tuple[int, ...]:
    """Preorder walk of a spanning tree: shortcutting the doubled tree."""
    adj = tree.adjacency(k)
    for lst in adj:
        lst.sort()
    seen = [False] * k
    out = []
    stack = [root]
    while stack:
        u = stack.pop()
        if seen[u]:
            continue
        seen[u] = True
        out.append(u)
        stack.extend(reversed([v for v in adj[u] if not seen[v]]))
    return tuple(out)


def min_ordering_manhattan(t, r: RequestSet, limit: int = DEFAULT_EXACT_LIMIT) -> OfflineResult:
    """Exact cheapest Manhattan path starting at the dummy."""
    r = _on(r, t)
    cost, ordering = min_path(r.manhattan_matrix(), "auto", limit)
    return OfflineResult(ordering, cost, "exact-manhattan-path", None)
