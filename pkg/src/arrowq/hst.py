"""Rooted weighted trees, 2-HSTs, the randomized metric embedding and subtree splitting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .metric_graph import TOL, MetricSpace


class HstError(ValueError):
    pass


def hst_delta(level: int, height: int | None = None) -> float:
    """Leaf-to-leaf distance when the lowest common ancestor sits at ``level``."""
    if level < 0 or (height is not None and level > height):
        raise HstError(f"level {level} outside 0..{height if height is not None else 'h'}")
    return float(2 ** (level + 1) - 2)


def edge_length(level: int) -> float:
    """Length of the edge from a level-``level`` node up to its parent."""
    return 0.0 if level < 0 else float(2 ** level)


class Tree:
    """Rooted tree on nodes ``0..n-1``; ``weight[u]`` is the length of the edge to ``parent[u]``."""

    def __init__(self, parent, weight):
        self.parent = [int(p) for p in parent]
        self.weight = [float(w) for w in weight]
        n = len(self.parent)
        if n == 0 or len(self.weight) != n:
            raise HstError("parent and weight must be non-empty and of equal length")
        roots = [u for u, p in enumerate(self.parent) if p < 0]
        if len(roots) != 1:
            raise HstError(f"expected exactly one root, found {len(roots)}")
        self.root = roots[0]
        self.children: list[list[int]] = [[] for _ in range(n)]
        for u, p in enumerate(self.parent):
            if p >= 0:
                if p >= n:
                    raise HstError(f"node {u} has unknown parent {p}")
                self.children[p].append(u)
        self.depth = [0] * n
        self.rootdist = [0.0] * n
        seen = 0
        stack = [self.root]
        while stack:
            u = stack.pop()
            seen += 1
            for c in self.children[u]:
                self.depth[c] = self.depth[u] + 1
                self.rootdist[c] = self.rootdist[u] + self.weight[c]
                stack.append(c)
        if seen != n:
            raise HstError("parent links contain a cycle or unreachable nodes")

    @classmethod
    def from_edges(cls, n: int, edges, root: int = 0) -> "Tree":
        adj: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for u, v, w in edges:
            adj[u].append((v, float(w)))
            adj[v].append((u, float(w)))
        parent = [-2] * n
        weight = [0.0] * n
        parent[root] = -1
        stack = [root]
        while stack:
            u = stack.pop()
            for v, w in adj[u]:
                if parent[v] == -2:
                    parent[v] = u
                    weight[v] = w
                    stack.append(v)
        if -2 in parent:
            raise HstError("edge list does not span all nodes")
        return cls(parent, weight)

    @property
    def node_count(self) -> int:
        return len(self.parent)

    def neighbors(self, u: int) -> list[int]:
        out = list(self.children[u])
        if self.parent[u] >= 0:
            out.append(self.parent[u])
        return out

    def edge_weight(self, u: int, v: int) -> float:
        if self.parent[u] == v:
            return self.weight[u]
        if self.parent[v] == u:
            return self.weight[v]
        raise HstError(f"nodes {u} and {v} are not adjacent")

    def lca(self, u: int, v: int) -> int:
        du, dv = self.depth[u], self.depth[v]
        while du > dv:
            u = self.parent[u]
            du -= 1
        while dv > du:
            v = self.parent[v]
            dv -= 1
        while u != v:
            u = self.parent[u]
            v = self.parent[v]
        return u

    def distance(self, u: int, v: int) -> float:
        if u == v:
            return 0.0
        a = self.lca(u, v)
        return self.rootdist[u] + self.rootdist[v] - 2.0 * self.rootdist[a]

    def path(self, u: int, v: int) -> list[int]:
        """Node sequence of the unique path from ``u`` to ``v``."""
        a = self.lca(u, v)
        up = [u]
        while up[-1] != a:
            up.append(self.parent[up[-1]])
        down = [v]
        while down[-1] != a:
            down.append(self.parent[down[-1]])
        return up + down[-2::-1]

    def subtree(self, u: int) -> list[int]:
        out, stack = [], [u]
        while stack:
            x = stack.pop()
            out.append(x)
            stack.extend(reversed(self.children[x]))
        return out

    def leaves(self) -> list[int]:
        return [u for u in range(self.node_count) if not self.children[u]]

    def distance_matrix(self, nodes) -> np.ndarray:
        nodes = list(nodes)
        k = len(nodes)
        d = np.zeros((k, k))
        for i in range(k):
            for j in range(i + 1, k):
                d[i, j] = d[j, i] = self.distance(nodes[i], nodes[j])
        return d


class Hst(Tree):
    """A 2-HST. Level ``height`` is the root, level 0 holds the point leaves and
    level -1 is reserved for per-request leaves hanging at distance 0."""

    def __init__(self, parent, weight, level, leaf_map: dict[int, int] | None = None, meta: dict | None = None):
        super().__init__(parent, weight)
        self.level = [int(x) for x in level]
        if len(self.level) != self.node_count:
            raise HstError("level array length mismatch")
        self.height = self.level[self.root]
        self.leaf_map = dict(leaf_map or {})
        self.meta = dict(meta or {})

    @property
    def has_request_leaves(self) -> bool:
        return any(x < 0 for x in self.level)

    def ancestor_at(self, u: int, level: int) -> int:
        while self.level[u] < level:
            u = self.parent[u]
        return u

    def lca_level(self, u: int, v: int) -> int:
        return self.level[self.lca(u, v)]

    def nodes_at(self, level: int) -> list[int]:
        return [u for u in range(self.node_count) if self.level[u] == level]

    def point_distance(self, x: int, y: int) -> float:
        return self.distance(self.leaf_map[x], self.leaf_map[y])

    def copy(self) -> "Hst":
        return Hst(self.parent, self.weight, self.level, self.leaf_map, self.meta)

    def to_text(self) -> str:
        lines = [f"hst {self.height} {self.node_count}"]
        if self.meta:
            lines.append("meta " + json.dumps(self.meta, sort_keys=True))
        for u in range(self.node_count):
            lines.append(f"node {u} {self.parent[u]} {self.level[u]} {self.weight[u]!r}")
        for x in sorted(self.leaf_map):
            lines.append(f"leaf {x} {self.leaf_map[x]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Hst":
        parent, weight, level, leaf_map, meta = {}, {}, {}, {}, {}
        declared = None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tag, _, rest = line.partition(" ")
            parts = rest.split()
            try:
                if tag == "hst":
                    declared = int(parts[1])
                elif tag == "meta":
                    meta = json.loads(rest)
                elif tag == "node":
                    u = int(parts[0])
                    parent[u], level[u] = int(parts[1]), int(parts[2])
                    weight[u] = float(parts[3]) if len(parts) > 3 else edge_length(level[u])
                elif tag == "leaf":
                    leaf_map[int(parts[0])] = int(parts[1])
                else:
                    raise HstError(f"line {lineno}: unknown record {tag!r}")
            except (IndexError, ValueError) as exc:
                raise HstError(f"line {lineno}: malformed record") from exc
        n = len(parent)
        if declared is not None and declared != n:
            raise HstError(f"header declares {declared} nodes, found {n}")
        if sorted(parent) != list(range(n)):
            raise HstError("node ids must be 0..n-1")
        order = range(n)
        return cls([parent[u] for u in order], [weight[u] for u in order],
                   [level[u] for u in order], leaf_map, meta)


def verify_hst(t: Hst, tol: float = TOL) -> list[dict]:
    """Check the level schedule, edge lengths, leaf depth and leaf distances."""
    report: list[dict] = []
    for u in range(t.node_count):
        lv = t.level[u]
        p = t.parent[u]
        if p >= 0 and t.level[p] != lv + 1:
            report.append({"kind": "level", "node": u, "value": (lv, t.level[p])})
        if p >= 0 and abs(t.weight[u] - edge_length(lv)) > tol:
            report.append({"kind": "length", "node": u, "value": (t.weight[u], edge_length(lv))})
        if not t.children[u] and lv > 0:
            report.append({"kind": "depth", "node": u, "value": lv})
        if lv < -1:
            report.append({"kind": "depth", "node": u, "value": lv})
        if lv == -1 and t.children[u]:
            report.append({"kind": "depth", "node": u, "value": "request leaf has children"})
    targets = list(t.leaf_map.values())
    if len(set(targets)) != len(targets):
        report.append({"kind": "leaf_map", "value": "not injective"})
    for x, u in t.leaf_map.items():
        if not (0 <= u < t.node_count) or t.level[u] != 0:
            report.append({"kind": "leaf_map", "point": x, "value": u})
    if not any(r["kind"] in ("level", "length") for r in report):
        leaves = [u for u in range(t.node_count) if t.level[u] == 0]
        if len(leaves) > 64:
            leaves = leaves[:: max(1, len(leaves) // 64)]
        for i, a in enumerate(leaves):
            for b in leaves[i + 1:]:
                d = t.distance(a, b)
                want = hst_delta(t.lca_level(a, b))
                if abs(d - want) > tol:
                    report.append({"kind": "delta", "nodes": (a, b), "value": (d, want)})
    return report


def hst_from_labels(labels: np.ndarray, meta: dict | None = None) -> Hst:
    """Build an HST from nested cluster labels.

    ``labels[l, x]`` names the level-``l`` cluster of point ``x``; row ``h`` is
    constant and row 0 must separate all points.
    """
    h = labels.shape[0] - 1
    n = labels.shape[1]
    parent, weight, level = [-1], [0.0], [h]
    node_of: dict[tuple[int, int], int] = {(h, int(labels[h, 0])): 0}
    leaf_map: dict[int, int] = {}
    for x in range(n):
        up = 0
        for lv in range(h - 1, -1, -1):
            key = (lv, int(labels[lv, x]))
            node = node_of.get(key)
            if node is None:
                node = len(parent)
                node_of[key] = node
                parent.append(up)
                weight.append(edge_length(lv))
                level.append(lv)
            up = node
        leaf_map[x] = up
    return Hst(parent, weight, level, leaf_map, meta)


def frt_height(diameter: float, n: int) -> int:
    if n <= 1:
        return 0
    return max(1, math.ceil(math.log2(diameter) - 1e-12))


def frt_labels(dist: np.ndarray, rng: np.random.Generator):
    """Random nested partition of a metric. Returns ``(labels, height, beta, perm)``.

    Level-``l`` clusters use radius ``beta * (2**l - 1) / 2`` with ``beta`` in
    [1, 2), which keeps every cluster's diameter strictly below the tree
    distance of its separated pairs, so tree distances dominate.
    """
    n = dist.shape[0]
    h = frt_height(float(dist.max()) if n > 1 else 0.0, n)
    perm = rng.permutation(n)
    beta = float(2.0 ** rng.random())
    labels = np.zeros((h + 1, n), dtype=np.int64)
    dp = dist[:, perm]
    for lv in range(h - 1, -1, -1):
        radius = beta * (2.0 ** lv - 1.0) / 2.0
        center = np.argmax(dp <= radius, axis=1)
        # nesting: refine the parent cluster by the center
        labels[lv] = labels[lv + 1] * n + center
        _, labels[lv] = np.unique(labels[lv], return_inverse=True)
    return labels, h, beta, perm


def label_tree_distances(labels: np.ndarray) -> np.ndarray:
    """Pairwise leaf distances implied by nested labels."""
    h = labels.shape[0] - 1
    n = labels.shape[1]
    lca = np.full((n, n), h, dtype=np.int64)
    for lv in range(h - 1, -1, -1):
        same = labels[lv][:, None] == labels[lv][None, :]
        lca[same] = lv
    return 2.0 ** (lca + 1) - 2.0


def build_frt_hst(m: MetricSpace, seed) -> Hst:
    n = m.point_count
    if n > 1 and m.min_distance() < 1 - TOL:
        raise HstError(f"minimum distance {m.min_distance()} is below 1")
    rng = np.random.default_rng(seed)
    labels, h, beta, perm = frt_labels(np.asarray(m.dist), rng)
    radii = [beta * (2.0 ** lv - 1.0) / 2.0 for lv in range(h)]
    diam = m.diameter() if n > 1 else 0.0
    meta = {
        "construction": "frt",
        "beta": beta,
        "radii": radii,
        "diameter": diam,
        "root_delta": hst_delta(h) if h > 0 else 0.0,
    }
    return hst_from_labels(labels, meta)


def random_hst(height: int, rng: np.random.Generator, max_children: int = 3, min_children: int = 1) -> Hst:
    """Random 2-HST with every leaf at level 0; the root gets at least two children
    when ``max_children`` allows it. Leaves are mapped to points in DFS order."""
    parent, weight, level = [-1], [0.0], [height]
    frontier = [0]
    while frontier:
        u = frontier.pop(0)
        lv = level[u]
        if lv == 0:
            continue
        lo = max(min_children, 2) if u == 0 and max_children >= 2 else min_children
        k = int(rng.integers(lo, max_children + 1))
        for _ in range(k):
            c = len(parent)
            parent.append(u)
            weight.append(edge_length(lv - 1))
            level.append(lv - 1)
            frontier.append(c)
    t = Hst(parent, weight, level)
    leaves = [u for u in t.subtree(t.root) if t.level[u] == 0]
    t.leaf_map = {i: u for i, u in enumerate(leaves)}
    return t


def attach_request_leaves(t: Hst, r):
    """Give every request a private level -1 leaf below its level-0 leaf.

    Returns the extended tree and the request set relocated onto the new leaves.
    """
    parent, weight, level = list(t.parent), list(t.weight), list(t.level)
    nodes = []
    for i, v in enumerate(r.nodes):
        if not (0 <= v < t.node_count) or t.level[v] != 0:
            raise HstError(f"request {i} sits on {v}, which is not a level-0 leaf")
        nodes.append(len(parent))
        parent.append(v)
        weight.append(0.0)
        level.append(-1)
    meta = dict(t.meta, request_leaves=True)
    t2 = Hst(parent, weight, level, t.leaf_map, meta)
    return t2, r.relocate(t2, nodes)


@dataclass(frozen=True)
class SplitRecord:
    level: int
    split_subtree: int
    copy_root: int
    witness_blocks: tuple[tuple[int, ...], tuple[int, ...]]
    left: tuple[int, ...]
    right: tuple[int, ...]
    gap: float = field(default=0.0)


def level_blocks(t: Hst, order_nodes, level: int) -> list[tuple[int, int, int]]:
    """Maximal runs of consecutive order positions in one level-``level`` subtree,
    as ``(first_position, last_position, subtree_root)``."""
    runs: list[tuple[int, int, int]] = []
    for p, v in enumerate(order_nodes):
        a = t.ancestor_at(v, level) if level > -1 else v
        if level <= -1 or not runs or runs[-1][2] != a:
            runs.append((p, p, a))
        else:
            runs[-1] = (runs[-1][0], p, a)
    return runs


def split_hst(t: Hst, r, order, tol: float = 0.0):
    """Duplicate subtrees whose neighbor blocks are separated in time by at least
    the tree distance of the enclosing level, top-down, until none remain.

    Returns ``(tree, requests, records)``. The input tree is not modified;
    copies get fresh node ids and the original subtree keeps the earlier blocks.
    """
    order = list(order)
    if sorted(order) != list(range(len(r))) or (order and order[0] != 0):
        raise HstError("order must be a permutation of the requests starting at index 0")
    parent, weight, level = list(t.parent), list(t.weight), list(t.level)
    children = [list(c) for c in t.children]
    nodes = list(r.nodes)
    times = r.times
    records: list[SplitRecord] = []

    def anc(v: int, lv: int) -> int:
        while level[v] < lv:
            v = parent[v]
        return v

    def copy_subtree(c: int, new_parent: int) -> dict[int, int]:
        mapping: dict[int, int] = {}
        stack = [(c, new_parent)]
        while stack:
            u, p = stack.pop()
            nu = len(parent)
            mapping[u] = nu
            parent.append(p)
            weight.append(weight[u])
            level.append(level[u])
            children.append([])
            children[p].append(nu)
            for ch in reversed(children[u]):
                stack.append((ch, nu))
        return mapping

    def find_split(x: int, lv: int):
        # level-(lv-1) blocks of the whole instance; requests outside x still break runs
        runs: list[list] = []
        for p, i in enumerate(order):
            a = anc(nodes[i], lv - 1)
            if runs and runs[-1][0] == a:
                runs[-1][1].append(p)
            else:
                runs.append([a, [p]])
        need = hst_delta(lv)
        for c in list(children[x]):
            mine = [run[1] for run in runs if run[0] == c]
            for k in range(len(mine) - 1):
                cur, nxt = mine[k], mine[k + 1]
                tmax = max(times[order[p]] for p in cur)
                tmin = min(times[order[p]] for p in nxt)
                if tmin - tmax >= need - tol:
                    return c, mine, k, tmin - tmax
        return None

    stack = [t.root]
    while stack:
        x = stack.pop()
        lv = level[x]
        if lv < 1:
            continue
        while True:
            hit = find_split(x, lv)
            if hit is None:
                break
            c, blocks, k, gap = hit
            mapping = copy_subtree(c, x)
            left = tuple(sorted(order[p] for b in blocks[: k + 1] for p in b))
            right = tuple(sorted(order[p] for b in blocks[k + 1:] for p in b))
            for i in right:
                nodes[i] = mapping[nodes[i]]
            records.append(SplitRecord(
                level=lv,
                split_subtree=c,
                copy_root=mapping[c],
                witness_blocks=(tuple(blocks[k]), tuple(blocks[k + 1])),
                left=left,
                right=right,
                gap=gap,
            ))
        stack.extend(reversed(children[x]))

    meta = dict(t.meta, splits=len(records))
    t2 = Hst(parent, weight, level, t.leaf_map, meta)
    return t2, r.relocate(t2, nodes), records
