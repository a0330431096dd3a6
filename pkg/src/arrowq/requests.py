"""Timed queueing requests, workload generators, the Manhattan cost and condensing."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from .metric_graph import TOL


class RequestError(ValueError):
    pass


@dataclass(frozen=True)
class Request:
    node: int
    time: float


class RequestSet:
    """Indexed requests on the nodes of ``space``; index 0 is the dummy at time 0.

    ``space`` is anything with ``distance(u, v)``: a tree, an HST or a metric.
    ``points`` optionally records the metric point each request was drawn at,
    which survives relocation onto split or extended trees.
    """

    def __init__(self, nodes, times, space, points=None, rank=None):
        self.nodes = tuple(int(v) for v in nodes)
        # exact rational copies keep simultaneous events simultaneous
        self.exact_times = tuple(x if isinstance(x, Fraction) else Fraction(float(x)) for x in times)
        self.times = tuple(float(x) for x in self.exact_times)
        self.space = space
        self.points = tuple(int(p) for p in points) if points is not None else None
        if not self.nodes:
            raise RequestError("a request set needs at least the dummy request")
        if len(self.times) != len(self.nodes):
            raise RequestError("nodes and times differ in length")
        if self.points is not None and len(self.points) != len(self.nodes):
            raise RequestError("points and nodes differ in length")
        if self.exact_times[0] != 0:
            raise RequestError(f"dummy request must be issued at time 0, got {self.times[0]}")
        if any(not (x >= 0) for x in self.times):
            raise RequestError("issue times must be non-negative")
        count = getattr(space, "node_count", None) or getattr(space, "point_count", None)
        if count is not None:
            for i, v in enumerate(self.nodes):
                if not 0 <= v < count:
                    raise RequestError(f"request {i} sits on unknown node {v}")
        # serialization rank for simultaneous issues; defaults to (time, index)
        if rank is None:
            by_time = sorted(range(len(self.times)), key=lambda i: (self.exact_times[i], i))
            ranks = [0] * len(by_time)
            for pos, i in enumerate(by_time):
                ranks[i] = pos
            self.rank = tuple(ranks)
        else:
            self.rank = tuple(int(x) for x in rank)
            if sorted(self.rank) != list(range(len(self.nodes))):
                raise RequestError("rank must be a permutation of the request indices")
            by_rank = sorted(range(len(self.nodes)), key=lambda i: self.rank[i])
            if any(self.exact_times[a] > self.exact_times[b] for a, b in zip(by_rank, by_rank[1:])):
                raise RequestError("rank contradicts issue times")

    @classmethod
    def from_points(cls, t, points, times) -> "RequestSet":
        """Place requests drawn at metric points onto their leaves in ``t``."""
        try:
            nodes = [t.leaf_map[p] for p in points]
        except KeyError as exc:
            raise RequestError(f"point {exc.args[0]} has no leaf in the tree") from exc
        return cls(nodes, times, t, points)

    def relocate(self, space, nodes) -> "RequestSet":
        return RequestSet(nodes, self.exact_times, space, self.points, self.rank)

    def with_times(self, times, keep_rank: bool = False) -> "RequestSet":
        return RequestSet(self.nodes, times, self.space, self.points, self.rank if keep_rank else None)

    def __len__(self) -> int:
        return len(self.nodes)

    def __getitem__(self, i: int) -> Request:
        return Request(self.nodes[i], self.times[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @cached_property
    def dist(self) -> np.ndarray:
        """Pairwise request distances in ``space``."""
        k = len(self)
        d = np.zeros((k, k))
        cache: dict[tuple[int, int], float] = {}
        for i in range(k):
            for j in range(i + 1, k):
                a, b = self.nodes[i], self.nodes[j]
                key = (a, b) if a <= b else (b, a)
                if key not in cache:
                    cache[key] = self.space.distance(a, b)
                d[i, j] = d[j, i] = cache[key]
        d.setflags(write=False)
        return d

    @cached_property
    def time_array(self) -> np.ndarray:
        t = np.asarray(self.times, dtype=float)
        t.setflags(write=False)
        return t

    def manhattan_matrix(self) -> np.ndarray:
        t = self.time_array
        return self.dist + np.abs(t[:, None] - t[None, :])

    def time_order(self) -> list[int]:
        """Request indices sorted by issue time, ties by rank."""
        return sorted(range(len(self)), key=lambda i: (self.exact_times[i], self.rank[i]))

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for v, x in zip(self.nodes, self.times):
            h.update(f"{v}:{x!r};".encode())
        return h.hexdigest()[:16]

    def to_text(self) -> str:
        """Request-file form; uses points when known, tree nodes otherwise."""
        ids = self.points if self.points is not None else self.nodes
        lines = [f"dummy {ids[0]}"]
        lines += [f"{p} {x!r}" for p, x in zip(ids[1:], self.times[1:])]
        return "\n".join(lines) + "\n"


def manhattan_cost(a: Request, b: Request, t) -> float:
    return t.distance(a.node, b.node) + abs(a.time - b.time)


def condense_gaps(r: RequestSet, times=None) -> list[tuple[int, int, float]]:
    """For every time-consecutive pair ``(i, j)`` the slack
    ``min(t_b - t_a - d(a, b))`` over ``t_a <= t_i`` and ``t_b >= t_j``."""
    t = np.asarray(r.times if times is None else times, dtype=float)
    order = sorted(range(len(t)), key=lambda i: (t[i], i))
    d = r.dist[np.ix_(order, order)]
    ts = t[order]
    out = []
    for k in range(len(order) - 1):
        if ts[k + 1] == ts[k]:
            continue
        slack = ts[k + 1:][None, :] - ts[: k + 1][:, None] - d[: k + 1, k + 1:]
        out.append((order[k], order[k + 1], float(slack.min())))
    return out


def is_condensed(r: RequestSet, t=None, tol: float = TOL):
    """``(True, None)`` when condensed, else ``(False, (i, j))`` for the first
    time-consecutive pair that still has a positive gap."""
    if t is not None and t is not r.space:
        r = r.relocate(t, r.nodes)
    for i, j, slack in condense_gaps(r):
        if slack > tol:
            return False, (i, j)
    return True, None


def condense(r: RequestSet, t=None, tol: float = TOL) -> RequestSet:
    """Close every positive gap by shifting all later requests earlier.

    A single left-to-right pass suffices: shifting later requests only lowers
    the slack of pairs already handled. Shifts are computed exactly so that
    the ties they create are true ties.
    """
    if t is not None and t is not r.space:
        r = r.relocate(t, r.nodes)
    order = r.time_order()
    exact = [r.exact_times[i] for i in order]
    ts = np.asarray([float(x) for x in exact])
    d = r.dist[np.ix_(order, order)]
    dx = {}
    for k in range(len(order) - 1):
        if exact[k + 1] == exact[k]:
            continue
        slack = ts[k + 1:][None, :] - ts[: k + 1][:, None] - d[: k + 1, k + 1:]
        low = float(slack.min())
        if low <= tol:
            continue
        # settle near-minimal candidates exactly
        near = np.argwhere(slack <= low + 1e-9 * max(1.0, abs(low)))
        best = None
        for a, b in near:
            a, b = int(a), int(b) + k + 1
            key = (a, b)
            if key not in dx:
                dx[key] = Fraction(float(d[a, b]))
            gap = exact[b] - exact[a] - dx[key]
            if best is None or gap < best:
                best = gap
        if best <= 0:
            continue
        for p in range(k + 1, len(order)):
            exact[p] -= best
        ts[k + 1:] = [float(x) for x in exact[k + 1:]]
    times = [None] * len(order)
    for p, i in enumerate(order):
        times[i] = exact[p]
    # requests that now share an issue time keep their former serialization
    return r.with_times(times, keep_rank=True)


# -- workloads -------------------------------------------------------------

WORKLOAD_KINDS = ("one-shot", "poisson", "burst", "explicit")


def parse_workload(text: str) -> dict:
    """``one-shot:K``, ``poisson:RATE:HORIZON``, ``burst:BURSTS:SIZE[:WIDTH[:SPACING]]``."""
    kind, _, rest = text.partition(":")
    args = rest.split(":") if rest else []
    try:
        if kind == "one-shot":
            return {"kind": kind, "k": int(args[0]) if args else 1}
        if kind == "poisson":
            return {"kind": kind, "rate": float(args[0]), "horizon": float(args[1])}
        if kind == "burst":
            spec = {"kind": kind, "bursts": int(args[0]), "size": int(args[1])}
            if len(args) > 2:
                spec["width"] = int(args[2])
            if len(args) > 3:
                spec["spacing"] = float(args[3])
            return spec
    except (IndexError, ValueError) as exc:
        raise RequestError(f"malformed workload {text!r}") from exc
    raise RequestError(f"unknown workload model {kind!r}; expected one of {', '.join(WORKLOAD_KINDS)}")


def draw_workload(point_count: int, model: dict, seed, metric=None, dummy: int = 0):
    """Draw ``(points, times)`` with the dummy first.

    Only the point count, the optional metric and the seed are consulted, so the
    draw is independent of any tree later built over the same points.
    """
    kind = model.get("kind")
    rng = np.random.default_rng(seed)
    if not 0 <= dummy < point_count:
        raise RequestError(f"dummy point {dummy} outside 0..{point_count - 1}")
    if kind == "one-shot":
        k = int(model.get("k", 1))
        pts = rng.integers(0, point_count, size=k).tolist()
        ts = [0.0] * k
    elif kind == "poisson":
        rate, horizon = float(model["rate"]), float(model["horizon"])
        pts, ts = [], []
        now = rng.exponential(1.0 / rate)
        while now <= horizon:
            ts.append(float(now))
            pts.append(int(rng.integers(0, point_count)))
            now += rng.exponential(1.0 / rate)
    elif kind == "burst":
        bursts, size = int(model["bursts"]), int(model["size"])
        width = int(model.get("width", max(1, point_count // 8)))
        spacing = float(model.get("spacing", 8.0))
        jitter = float(model.get("jitter", 0.5))
        pts, ts = [], []
        for b in range(bursts):
            centre = int(rng.integers(0, point_count))
            if metric is not None:
                near = np.argsort(np.asarray(metric.dist)[centre], kind="stable")[:width]
            else:
                near = (centre + np.arange(width)) % point_count
            start = b * spacing + float(rng.random()) * jitter
            for _ in range(size):
                pts.append(int(rng.choice(near)))
                ts.append(start + float(rng.random()) * jitter)
    elif kind == "explicit":
        items = list(model.get("requests", []))
        pts = [int(p) for p, _ in items]
        ts = [float(x) for _, x in items]
        for p in pts:
            if not 0 <= p < point_count:
                raise RequestError(f"explicit request at unknown point {p}")
    else:
        raise RequestError(f"unknown workload model {kind!r}; expected one of {', '.join(WORKLOAD_KINDS)}")
    return [dummy] + list(pts), [0.0] + list(ts)


def generate_requests(t, model: dict | str, seed, dummy: int = 0, metric=None) -> RequestSet:
    if isinstance(model, str):
        model = parse_workload(model)
    point_count = len(t.leaf_map) if getattr(t, "leaf_map", None) else t.node_count
    pts, ts = draw_workload(point_count, model, seed, metric=metric, dummy=dummy)
    if getattr(t, "leaf_map", None):
        return RequestSet.from_points(t, pts, ts)
    return RequestSet(pts, ts, t, pts)


def parse_requests(text: str):
    """Parse a request file into ``(points, times)`` including the dummy."""
    dummy = None
    pts, ts = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "dummy":
            if dummy is not None or len(parts) != 2:
                raise RequestError(f"line {lineno}: bad dummy header")
            dummy = int(parts[1])
            continue
        if len(parts) != 2:
            raise RequestError(f"line {lineno}: expected 'point time'")
        try:
            p, x = int(parts[0]), float(parts[1])
        except ValueError as exc:
            raise RequestError(f"line {lineno}: cannot parse {line!r}") from exc
        if x < 0:
            raise RequestError(f"line {lineno}: negative issue time")
        pts.append(p)
        ts.append(x)
    return [0 if dummy is None else dummy] + pts, [0.0] + ts


def load_requests(path):
    with open(path, encoding="utf-8") as fh:
        return parse_requests(fh.read())
