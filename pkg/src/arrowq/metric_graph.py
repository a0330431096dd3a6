"""Weighted graphs, their shortest-path metric, and metric validation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree, shortest_path

TOL = 1e-9


class GraphError(ValueError):
    """Base class for rejected graph input."""


class GraphParseError(GraphError):
    pass


class DisconnectedGraphError(GraphError):
    pass


class WeightBelowOneError(GraphError):
    pass


@dataclass(frozen=True)
class WeightedGraph:
    node_count: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(u), int(v), float(w)) for u, v, w in self.edges))
        _validate_graph(self)

    def adjacency(self) -> csr_matrix:
        n = self.node_count
        # parallel edges keep the lightest one
        best: dict[tuple[int, int], float] = {}
        for u, v, w in self.edges:
            key = (min(u, v), max(u, v))
            if key not in best or w < best[key]:
                best[key] = w
        rows, cols, vals = [], [], []
        for (u, v), w in best.items():
            rows += [u, v]
            cols += [v, u]
            vals += [w, w]
        return csr_matrix((vals, (rows, cols)), shape=(n, n))

    def to_text(self) -> str:
        lines = [f"{self.node_count} {len(self.edges)}"]
        lines += [f"{u} {v} {w!r}" for u, v, w in self.edges]
        return "\n".join(lines) + "\n"


def _validate_graph(g: WeightedGraph) -> None:
    n = g.node_count
    if n < 1:
        raise GraphError(f"node_count must be positive, got {n}")
    for u, v, w in g.edges:
        if not (0 <= u < n and 0 <= v < n):
            raise GraphError(f"edge ({u}, {v}) references a node outside 0..{n - 1}")
        if u == v:
            raise GraphError(f"self-loop at node {u}")
        if not math.isfinite(w) or w < 1:
            raise WeightBelowOneError(f"edge ({u}, {v}) has weight {w}; weights must be >= 1")
    if n > 1:
        ncomp, _ = connected_components(g.adjacency(), directed=False)
        if ncomp != 1:
            raise DisconnectedGraphError(f"graph has {ncomp} connected components")


@dataclass(frozen=True, eq=False)
class MetricSpace:
    """A finite metric given by its full distance matrix."""

    dist: np.ndarray
    labels: tuple = field(default=())

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 1:
            raise ValueError(f"distance matrix must be square and non-empty, got shape {d.shape}")
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)

    @property
    def point_count(self) -> int:
        return self.dist.shape[0]

    def distance(self, u: int, v: int) -> float:
        return float(self.dist[u, v])

    def diameter(self) -> float:
        return float(self.dist.max())

    def min_distance(self) -> float:
        n = self.point_count
        if n < 2:
            return math.inf
        off = self.dist[~np.eye(n, dtype=bool)]
        return float(off.min())


def parse_graph(source: str) -> WeightedGraph:
    """Parse the ``n m`` / ``u v w`` text format; ``#`` starts a comment."""
    rows = []
    for lineno, raw in enumerate(source.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    if not rows:
        raise GraphParseError("empty graph description")
    lineno, head = rows[0]
    if len(head) != 2:
        raise GraphParseError(f"line {lineno}: expected 'n m' header, got {' '.join(head)!r}")
    try:
        n, m = int(head[0]), int(head[1])
    except ValueError as exc:
        raise GraphParseError(f"line {lineno}: header is not two integers") from exc
    body = rows[1:]
    if len(body) != m:
        raise GraphParseError(f"header declares {m} edges but {len(body)} edge lines follow")
    edges = []
    for lineno, parts in body:
        if len(parts) != 3:
            raise GraphParseError(f"line {lineno}: expected 'u v w'")
        try:
            edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise GraphParseError(f"line {lineno}: cannot parse {' '.join(parts)!r}") from exc
    return WeightedGraph(n, tuple(edges))


def load_graph(path) -> WeightedGraph:
    with open(path, encoding="utf-8") as fh:
        return parse_graph(fh.read())


def apsp_metric(g: WeightedGraph) -> MetricSpace:
    if g.node_count == 1:
        return MetricSpace(np.zeros((1, 1)))
    d = shortest_path(g.adjacency(), method="D", directed=False)
    return MetricSpace(d)


def validate_metric(m: MetricSpace, tol: float = TOL, min_distance: float | None = 1.0) -> list[dict]:
    """List every symmetry, identity, triangle or normalization violation.

    An empty list means the matrix is a valid (normalized) metric.
    """
    d = np.asarray(m.dist, dtype=float)
    n = d.shape[0]
    report: list[dict] = []
    for i in np.flatnonzero(np.abs(np.diag(d)) > tol):
        report.append({"kind": "identity", "points": (int(i),), "value": float(d[i, i])})
    asym = np.argwhere(np.triu(np.abs(d - d.T) > tol, 1))
    for i, j in asym:
        report.append({"kind": "symmetry", "points": (int(i), int(j)),
                       "value": (float(d[i, j]), float(d[j, i]))})
    neg = np.argwhere(d < -tol)
    for i, j in neg:
        report.append({"kind": "negative", "points": (int(i), int(j)), "value": float(d[i, j])})
    for k in range(n):
        via = d[:, k][:, None] + d[k, :][None, :]
        bad = np.argwhere(d > via + tol)
        for i, j in bad:
            if i == k or j == k:
                continue
            report.append({"kind": "triangle", "points": (int(i), int(k), int(j)),
                           "value": (float(d[i, j]), float(via[i, j]))})
    if min_distance is not None and n > 1:
        off = ~np.eye(n, dtype=bool)
        for i, j in np.argwhere(np.triu(off & (d < min_distance - tol), 1)):
            report.append({"kind": "min-distance", "points": (int(i), int(j)), "value": float(d[i, j])})
    return report


# -- generators ------------------------------------------------------------

def path_graph(n: int, weight: float = 1.0) -> WeightedGraph:
    return WeightedGraph(n, tuple((i, i + 1, weight) for i in range(n - 1)))


def cycle_graph(n: int, weight: float = 1.0) -> WeightedGraph:
    if n < 3:
        return path_graph(n, weight)
    return WeightedGraph(n, tuple((i, (i + 1) % n, weight) for i in range(n)))


def grid_graph(rows: int, cols: int, weight: float = 1.0) -> WeightedGraph:
    edges = []
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                edges.append((u, u + 1, weight))
            if r + 1 < rows:
                edges.append((u, u + cols, weight))
    return WeightedGraph(rows * cols, tuple(edges))


def complete_graph(n: int, weight: float = 1.0) -> WeightedGraph:
    return WeightedGraph(n, tuple((i, j, weight) for i in range(n) for j in range(i + 1, n)))


def random_geometric_graph(n: int, radius: float, seed) -> WeightedGraph:
    """Unit-square points joined within ``radius``, plus a Euclidean MST so the
    result is connected. Weights are rescaled so the lightest edge is 1."""
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2))
    eu = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    eu = np.maximum(eu, 1e-12)
    np.fill_diagonal(eu, 0.0)
    keep = np.triu(eu <= radius, 1)
    mst = minimum_spanning_tree(csr_matrix(np.triu(eu, 1))).toarray() > 0
    keep |= np.triu(mst | mst.T, 1)
    pairs = np.argwhere(keep)
    scale = 1.0 / min(eu[i, j] for i, j in pairs) if len(pairs) else 1.0
    return WeightedGraph(n, tuple((int(i), int(j), max(1.0, float(eu[i, j] * scale))) for i, j in pairs))


def graph_from_spec(spec: str) -> WeightedGraph:
    """Build a graph from ``kind:args`` (``cycle:64``, ``grid:4x4``,
    ``geometric:32:0.3:7``, ``complete:16``, ``path:8``) or read a file."""
    kind, _, rest = spec.partition(":")
    args = rest.split(":") if rest else []
    if kind == "path":
        return path_graph(int(args[0]))
    if kind == "cycle":
        return cycle_graph(int(args[0]))
    if kind == "grid":
        r, _, c = args[0].partition("x")
        return grid_graph(int(r), int(c or r))
    if kind in ("complete", "complete-uniform", "uniform"):
        return complete_graph(int(args[0]))
    if kind == "geometric":
        n = int(args[0])
        radius = float(args[1]) if len(args) > 1 else 0.3
        seed = int(args[2]) if len(args) > 2 else 0
        return random_geometric_graph(n, radius, seed)
    return load_graph(spec)
