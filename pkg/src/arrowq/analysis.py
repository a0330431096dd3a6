"""Executable checks for the Arrow cost analysis on HSTs.

Block partitions of an Arrow order, the block cost formula, the hierarchical
request spanning trees, distance-respecting properties, the generic cut-based
spanning tree comparison, and suites that run all of them on one instance.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import offline
from .arrow_sim import ExecutionTrace, delta_profile, latency_costs, run_async, run_sync
from .hst import Hst, hst_delta, level_blocks, split_hst, attach_request_leaves
from .offline import RequestTree, kruskal, tree_weight
from .requests import RequestSet, condense, is_condensed

TOL = 1e-9
CHAIN_CONSTANT = 432.0


class AnalysisError(ValueError):
    pass


class UnsplitTreeWarning(UserWarning):
    pass


@dataclass
class LemmaReport:
    lemma: str
    digest: str
    values: dict
    passed: bool
    witness: object = None
    advisory: bool = False

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        tag = " (advisory)" if self.advisory else ""
        return f"{status} {self.lemma}{tag} {self.digest}"


def _le(a: float, b: float, tol: float = TOL) -> bool:
    """``a <= b`` up to a relative and absolute tolerance."""
    return a <= b + tol * max(1.0, abs(b))


def instance_digest(t, r: RequestSet) -> str:
    import hashlib

    h = hashlib.sha256(r.digest().encode())
    h.update(repr((tuple(t.parent), tuple(t.weight))).encode())
    return h.hexdigest()[:16]


def _check_order(order, r: RequestSet):
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(len(r))) or order[0] != 0:
        raise AnalysisError("order must be a permutation of the request indices that starts with 0")
    return order


# -- block partitions ------------------------------------------------------

@dataclass(frozen=True)
class BlockPartition:
    height: int
    order: tuple[int, ...]
    blocks: dict
    roots: dict

    def n(self, level: int) -> int:
        return len(self.blocks[level])

    def counts(self) -> dict[int, int]:
        return {lv: len(b) for lv, b in sorted(self.blocks.items())}

    def index_sets(self) -> dict[int, tuple[frozenset, ...]]:
        return {
            lv: tuple(frozenset(self.order[p] for p in range(a, b + 1)) for a, b in bl)
            for lv, bl in self.blocks.items()
        }

    def block_requests(self, level: int, k: int) -> list[int]:
        a, b = self.blocks[level][k]
        return [self.order[p] for p in range(a, b + 1)]

    def parent(self, level: int, k: int) -> int:
        a, _ = self.blocks[level][k]
        for j, (x, y) in enumerate(self.blocks[level + 1]):
            if x <= a <= y:
                return j
        raise AnalysisError("block without parent")

    def children(self, level: int, k: int) -> list[int]:
        a, b = self.blocks[level][k]
        return [j for j, (x, y) in enumerate(self.blocks[level - 1]) if a <= x and y <= b]

    def same_subtree(self, level: int, i: int, j: int) -> bool:
        return self.roots[level][i] == self.roots[level][j]

    def neighbor_pairs(self, level: int) -> list[tuple[int, int]]:
        last: dict[int, int] = {}
        out = []
        for k, root in enumerate(self.roots[level]):
            if root in last:
                out.append((last[root], k))
            last[root] = k
        return out


def block_partition(t: Hst, order, r: RequestSet) -> BlockPartition:
    order = _check_order(order, r)
    for v in r.nodes:
        if not 0 <= v < t.node_count:
            raise AnalysisError(f"request node {v} is not in the tree")
    nodes = [r.nodes[i] for i in order]
    blocks, roots = {}, {}
    for lv in range(-1, t.height + 1):
        runs = level_blocks(t, nodes, lv)
        blocks[lv] = tuple((a, b) for a, b, _ in runs)
        roots[lv] = tuple(x for _, _, x in runs)
    return BlockPartition(t.height, order, blocks, roots)


def block_cost(p: BlockPartition) -> float:
    total = 0.0
    for lv in range(p.height):
        total += (p.n(lv) - p.n(lv + 1)) * hst_delta(lv + 1)
    return total


def check_block_properties(p: BlockPartition, t: Hst, r: RequestSet, tol: float = TOL) -> LemmaReport:
    """Consecutiveness, nesting and the four distance facts of a block partition."""
    d = r.dist
    dig = instance_digest(t, r)
    k = len(r)
    for lv, bl in p.blocks.items():
        covered = [q for a, b in bl for q in range(a, b + 1)]
        if covered != list(range(k)):
            return LemmaReport("block-structure", dig, {"level": lv}, False, ("not a partition", lv))
        if lv == -1 and any(a != b for a, b in bl):
            return LemmaReport("block-structure", dig, {"level": lv}, False, ("level -1 not singletons", lv))
        for j in range(len(bl) - 1):
            if p.roots[lv][j] == p.roots[lv][j + 1] and lv >= 0:
                return LemmaReport("block-structure", dig, {"level": lv}, False, ("runs not maximal", lv, j))
        if lv < p.height:
            for j in range(len(bl)):
                p.parent(lv, j)
    for lv in range(0, p.height + 1):
        dl = hst_delta(lv)
        dl1 = hst_delta(lv + 1) if lv < p.height else math.inf
        sets = [p.block_requests(lv, j) for j in range(p.n(lv))]
        for i, bi in enumerate(sets):
            if d[np.ix_(bi, bi)].max() > dl + tol:
                return LemmaReport("block-structure", dig, {"level": lv}, False, ("within-block", lv, i))
            for j in range(i + 1, len(sets)):
                sub = d[np.ix_(bi, sets[j])]
                if p.same_subtree(lv, i, j):
                    if sub.max() > dl + tol:
                        return LemmaReport("block-structure", dig, {"level": lv}, False, ("same-subtree", lv, i, j))
                else:
                    if lv < p.height and sub.min() < dl1 - tol:
                        return LemmaReport("block-structure", dig, {"level": lv}, False, ("separated", lv, i, j))
                    if lv < p.height and p.parent(lv, i) == p.parent(lv, j) and np.abs(sub - dl1).max() > tol:
                        return LemmaReport("block-structure", dig, {"level": lv}, False, ("siblings", lv, i, j))
    return LemmaReport("block-structure", dig, {"counts": p.counts()}, True)


# -- request spanning trees -------------------------------------------------

def _subtree_requests(t, r: RequestSet):
    at: list[list[int]] = [[] for _ in range(t.node_count)]
    for i, v in enumerate(r.nodes):
        at[v].append(i)
    post = list(reversed(t.subtree(t.root)))
    sub: list[list[int]] = [[] for _ in range(t.node_count)]
    for u in post:
        acc = list(at[u])
        for c in t.children[u]:
            acc.extend(sub[c])
        sub[u] = sorted(acc)
    return at, sub, post


def _groups(t, at, sub, x) -> list[list[int]]:
    """Requests of ``x`` grouped by child subtree; requests sitting on ``x`` are singletons."""
    out = [sub[c] for c in t.children[x] if sub[c]]
    out += [[i] for i in at[x]]
    return out


def edge_anchor(t, r: RequestSet, a: int, b: int) -> int:
    return t.lca(r.nodes[a], r.nodes[b])


def build_sstar(t: Hst, r: RequestSet) -> RequestTree:
    """Bottom-up tree: at every node, join the children's trees by the cheapest
    Manhattan edges that close no cycle (ties by lowest index pair)."""
    if "splits" not in getattr(t, "meta", {}):
        warnings.warn("building the hierarchical tree on a tree that was not split", UnsplitTreeWarning, stacklevel=2)
    cm = r.manhattan_matrix()
    at, sub, post = _subtree_requests(t, r)
    ds = offline._DisjointSet(len(r))
    edges, anchors = [], []
    for x in post:
        groups = _groups(t, at, sub, x)
        if len(groups) < 2:
            continue
        cand = []
        for g in range(len(groups)):
            for h in range(g + 1, len(groups)):
                for a in groups[g]:
                    for b in groups[h]:
                        cand.append((float(cm[a, b]), min(a, b), max(a, b)))
        cand.sort()
        for _, a, b in cand:
            if ds.union(a, b):
                edges.append((a, b))
                anchors.append(x)
    return RequestTree(tuple(edges), tree_weight(edges, cm), tuple(anchors))


def local_successors(order, r: RequestSet) -> list[int]:
    order = list(order)
    k = len(order)
    d = r.dist[np.ix_(order, order)]
    out = []
    for i in range(k - 1):
        row = d[i, i + 1:]
        out.append(i + 1 + int(np.argmin(row)))
    return out


def local_successor(order, t, i: int, r: RequestSet) -> int:
    """Smallest later position at minimum tree distance from position ``i``."""
    order = list(order)
    if not 0 <= i <= len(order) - 2:
        raise AnalysisError(f"position {i} outside 0..{len(order) - 2}")
    if t is not r.space:
        r = r.relocate(t, r.nodes)
    src = r.nodes[order[i]]
    best, arg = math.inf, -1
    for j in range(i + 1, len(order)):
        dj = t.distance(src, r.nodes[order[j]])
        if dj < best:
            best, arg = dj, j
    return arg


def build_sbb(order, t, r: RequestSet) -> RequestTree:
    """One edge from every position to its local successor."""
    order = _check_order(order, r)
    if t is not r.space:
        r = r.relocate(t, r.nodes)
    nxt = local_successors(order, r)
    cm = r.manhattan_matrix()
    edges = [(order[i], order[j]) for i, j in enumerate(nxt)]
    anchors = tuple(edge_anchor(t, r, a, b) for a, b in edges)
    return RequestTree(tuple(edges), tree_weight(edges, cm), anchors)


def check_subtree_connectivity(tree: RequestTree, t, r: RequestSet, name: str = "subtree-connectivity") -> LemmaReport:
    """Every subtree's requests induce a connected piece of ``tree``."""
    _, sub, _ = _subtree_requests(t, r)
    dig = instance_digest(t, r)
    for x in range(t.node_count):
        members = set(sub[x])
        if len(members) < 2:
            continue
        inside = sum(1 for a, b in tree.edges if a in members and b in members)
        if inside != len(members) - 1:
            return LemmaReport(name, dig, {"node": x}, False, {"node": x, "requests": sorted(members), "edges": inside})
    return LemmaReport(name, dig, {"edges": len(tree.edges)}, True)


# -- distance-respecting properties -----------------------------------------

def check_distance_respecting_order(order, t, r: RequestSet, tol: float = TOL, name: str = "distance-respecting-order") -> LemmaReport:
    """Earlier-ordered requests are never later than a later one by more than their distance."""
    order = _check_order(order, r)
    if t is not r.space:
        r = r.relocate(t, r.nodes)
    ts = r.time_array[list(order)]
    d = r.dist[np.ix_(order, order)]
    slack = d - (ts[:, None] - ts[None, :])
    slack[np.tril_indices(len(order))] = np.inf
    worst = float(slack.min()) if len(order) > 1 else math.inf
    ok = worst >= -tol
    witness = None
    if not ok:
        p, q = np.unravel_index(int(np.argmin(slack)), slack.shape)
        witness = {"earlier": order[p], "later": order[q], "slack": worst}
    return LemmaReport(name, instance_digest(t, r), {"min_slack": worst}, ok, witness)


def check_distance_respecting_latency(trace: ExecutionTrace, t, r: RequestSet, tol: float = TOL,
                                      name: str = "distance-respecting-latency") -> LemmaReport:
    """``t_p + L(p) <= t_q + d(v_q, v_{p-1})`` for all ordered positions ``1 <= p < q``."""
    if t is not r.space:
        r = r.relocate(t, r.nodes)
    order = list(trace.order)
    lat, _ = latency_costs(trace, r)
    ts = r.time_array
    worst, witness = math.inf, None
    for p in range(1, len(order)):
        lhs = ts[order[p]] + lat[p - 1]
        prev = order[p - 1]
        for q in range(p + 1, len(order)):
            rhs = ts[order[q]] + r.dist[order[q], prev]
            s = rhs - lhs
            if s < worst:
                worst = s
                witness = {"position": p, "later_position": q, "lhs": lhs, "rhs": rhs}
    ok = worst >= -tol * max(1.0, abs(worst))
    return LemmaReport(name, instance_digest(t, r), {"min_slack": worst}, ok, None if ok else witness)


# -- cut-based spanning tree comparison --------------------------------------

def _edge_list(tree, weight_of):
    edges = tree.edges if isinstance(tree, RequestTree) else tree
    out = []
    for e in edges:
        if len(e) == 3:
            out.append((e[0], e[1], float(e[2])))
        else:
            out.append((e[0], e[1], float(weight_of(e[0], e[1]))))
    return out


def _weight_oracle(metric):
    if metric is None:
        return lambda a, b: math.nan
    if callable(metric):
        return metric
    m = np.asarray(metric)
    return lambda a, b: m[a, b]


def _spanning(vertices, edges) -> bool:
    if len(edges) != len(vertices) - 1:
        return False
    adj = {v: [] for v in vertices}
    for a, b, _ in edges:
        adj[a].append(b)
        adj[b].append(a)
    start = next(iter(vertices))
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == len(vertices)


def _cut_sides(vertices, edges, removed: int) -> set:
    adj = {v: [] for v in vertices}
    for idx, (a, b, _) in enumerate(edges):
        if idx != removed:
            adj[a].append(b)
            adj[b].append(a)
    start = edges[removed][0]
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def check_mst_approx(tau, tau_star, metric=None, lam: float = 1.0, tol: float = TOL,
                     name: str = "cut-comparison", digest: str = "") -> LemmaReport:
    """Compare two spanning trees through the cuts of the first.

    For every edge ``e`` of ``tau`` the lightest ``tau_star`` edge across the
    cut left by removing ``e`` must weigh at least ``w(e) / lam``; when that
    holds for all edges, ``w(tau) <= lam * w(tau_star)`` is asserted. Edges may
    be ``(a, b)`` pairs priced by ``metric`` or ``(a, b, w)`` triples.
    """
    if lam < 1:
        raise AnalysisError("lambda must be at least 1")
    wof = _weight_oracle(metric)
    e1 = _edge_list(tau, wof)
    e2 = _edge_list(tau_star, wof)
    verts = {a for a, b, _ in e1} | {b for a, b, _ in e1}
    verts2 = {a for a, b, _ in e2} | {b for a, b, _ in e2}
    if verts != verts2 or not _spanning(verts, e1) or not _spanning(verts2, e2):
        raise AnalysisError("both inputs must be spanning trees of the same vertex set")
    w1 = sum(w for _, _, w in e1)
    w2 = sum(w for _, _, w in e2)
    hyp = True
    worst = math.inf
    witness = None
    per_edge = []
    for idx, (a, b, w) in enumerate(e1):
        side = _cut_sides(verts, e1, idx)
        light = min((w_ for x, y, w_ in e2 if (x in side) != (y in side)), default=math.inf)
        per_edge.append((a, b, w, light))
        slack = lam * light - w
        if slack < worst:
            worst = slack
        if not _le(w, lam * light, tol):
            hyp = False
            if witness is None:
                witness = {"edge": (a, b), "weight": w, "lightest_crossing": light}
    concl = _le(w1, lam * w2, tol)
    values = {"weight": w1, "reference": w2, "lambda": lam, "hypothesis": hyp,
              "conclusion": concl, "min_slack": worst, "edges": per_edge}
    passed = concl if hyp else True
    if hyp and not concl:
        witness = {"weight": w1, "reference": w2}
    return LemmaReport(name, digest, values, passed, witness)


def check_cut_lightest(tau: RequestTree, weights: np.ndarray, lam: float, tol: float = TOL,
                       name: str = "cut-lightest", digest: str = "") -> LemmaReport:
    """Every edge of ``tau`` is within ``lam`` of the lightest pair across its cut."""
    k = weights.shape[0]
    e1 = [(a, b, float(weights[a, b])) for a, b in tau.edges]
    verts = set(range(k))
    worst, witness = math.inf, None
    for idx, (a, b, w) in enumerate(e1):
        side = _cut_sides(verts, e1, idx)
        mask = np.zeros(k, dtype=bool)
        mask[list(side)] = True
        light = float(weights[np.ix_(mask, ~mask)].min())
        slack = lam * light - w
        if slack < worst:
            worst = slack
            if not _le(w, lam * light, tol):
                witness = {"edge": (a, b), "weight": w, "lightest_crossing": light}
    ok = witness is None
    return LemmaReport(name, digest, {"min_slack": worst, "lambda": lam}, ok, witness)


def check_per_subtree_approx(t, r: RequestSet, sbb: RequestTree, sstar: RequestTree, lam: float = 3.0,
                             tol: float = TOL, name: str = "successor-tree-per-subtree") -> LemmaReport:
    """At every tree node, contract the child subtrees and compare the two sets of
    connecting edges through the cut argument."""
    cm = r.manhattan_matrix()
    at, sub, post = _subtree_requests(t, r)
    dig = instance_digest(t, r)
    sbb_by = {}
    for (a, b), x in zip(sbb.edges, sbb.anchors):
        sbb_by.setdefault(x, []).append((a, b))
    star_by = {}
    for (a, b), x in zip(sstar.edges, sstar.anchors):
        star_by.setdefault(x, []).append((a, b))
    worst_ratio = 0.0
    for x in post:
        groups = _groups(t, at, sub, x)
        if len(groups) < 2:
            continue
        gid = {}
        for g, members in enumerate(groups):
            for i in members:
                gid[i] = g
        e1 = [(gid[a], gid[b], float(cm[a, b])) for a, b in sbb_by.get(x, [])]
        e2 = [(gid[a], gid[b], float(cm[a, b])) for a, b in star_by.get(x, [])]
        try:
            rep = check_mst_approx(e1, e2, None, lam, tol, name, dig)
        except AnalysisError:
            return LemmaReport(name, dig, {"node": x}, False, {"node": x, "reason": "connecting edges do not span"})
        w1, w2 = rep.values["weight"], rep.values["reference"]
        if w2 > 0:
            worst_ratio = max(worst_ratio, w1 / w2)
        if not (rep.values["hypothesis"] and rep.values["conclusion"]):
            return LemmaReport(name, dig, {"node": x, **{k: v for k, v in rep.values.items() if k != "edges"}},
                               False, {"node": x, "witness": rep.witness})
    return LemmaReport(name, dig, {"max_ratio": worst_ratio}, True)


# -- asynchronous properties -----------------------------------------------

def check_first_visit(trace: ExecutionTrace, r: RequestSet, name: str = "first-on-path") -> LemmaReport:
    """Along its own path, each request is processed before every later-ordered request."""
    pos = trace.position()
    by_node: dict[int, list[tuple[int, int]]] = {}
    for (req, u), step in trace.visit_step.items():
        by_node.setdefault(u, []).append((pos[req], step))
    for i in trace.order[1:]:
        for u in trace.path_log[i]:
            mine = trace.visit_step[(i, u)]
            for q, step in by_node.get(u, []):
                if q > pos[i] and step < mine:
                    return LemmaReport(name, r.digest(), {}, False,
                                       {"request": i, "node": u, "overtaken_by": trace.order[q]})
    return LemmaReport(name, r.digest(), {}, True)


def check_delta_window(trace: ExecutionTrace, t, r: RequestSet, tol: float = TOL,
                       name: str = "broadcast-window") -> LemmaReport:
    """``t_i + D(r_i, v) <= t_j + D(r_j, v)`` for later ``j`` and ``v`` on ``r_i``'s path."""
    delta = delta_profile(trace, t, r)
    order = trace.order
    ts = r.times
    worst = math.inf
    for p in range(1, len(order)):
        i = order[p]
        for v in trace.path_log[i]:
            lhs = ts[i] + delta[(i, v)]
            for q in range(p + 1, len(order)):
                j = order[q]
                s = ts[j] + delta[(j, v)] - lhs
                if s < worst:
                    worst = s
                if s < -tol * max(1.0, abs(lhs)):
                    return LemmaReport(name, r.digest(), {"min_slack": s}, False,
                                       {"request": i, "later": j, "node": v})
    return LemmaReport(name, r.digest(), {"min_slack": worst}, True)


def check_async_distance_respecting(trace: ExecutionTrace, t, r: RequestSet, tol: float = TOL,
                                    name: str = "async-distance-respecting") -> LemmaReport:
    delta = delta_profile(trace, t, r)
    order = trace.order
    ts = r.times
    d = r.dist
    for p in range(len(order)):
        i = order[p]
        for q in range(p + 1, len(order)):
            j = order[q]
            if not _le(ts[i] - ts[j], d[i, j], tol):
                return LemmaReport(name, r.digest(), {}, False, {"claim": 1, "earlier": i, "later": j})
            if p >= 1:
                prev = order[p - 1]
                lhs = ts[i] + delta[(i, r.nodes[prev])]
                if not _le(lhs, ts[j] + d[prev, j], tol):
                    return LemmaReport(name, r.digest(), {}, False, {"claim": 2, "earlier": i, "later": j})
    return LemmaReport(name, r.digest(), {}, True)


def check_delta_bounds(trace: ExecutionTrace, t, r: RequestSet, exact: bool = False, tol: float = TOL,
                       name: str = "broadcast-delay-bound") -> LemmaReport:
    """Broadcast delays never exceed the tree distance; equal to it when ``exact``."""
    delta = delta_profile(trace, t, r)
    for (i, u), dl in delta.items():
        du = t.distance(r.nodes[i], u)
        bad = abs(dl - du) > tol if exact else dl > du + tol
        if bad or dl < -tol:
            return LemmaReport(name, r.digest(), {}, False, {"request": i, "node": u, "delta": dl, "distance": du})
    missing = len(r) * t.node_count - len(delta)
    if missing:
        return LemmaReport(name, r.digest(), {"missing": missing}, False, {"missing": missing})
    return LemmaReport(name, r.digest(), {"entries": len(delta)}, True)


def check_trace(trace: ExecutionTrace, t, r: RequestSet, synchronous: bool, tol: float = TOL,
                name: str = "trace-shape") -> LemmaReport:
    """Exactly-once ordering, direct paths and, when synchronous, latency equal to distance."""
    dig = r.digest()
    if sorted(trace.order) != list(range(len(r))) or trace.order[0] != 0:
        return LemmaReport(name, dig, {}, False, {"order": trace.order})
    for p in range(1, len(trace.order)):
        i, prev = trace.order[p], trace.order[p - 1]
        if trace.predecessor[i] != prev:
            return LemmaReport(name, dig, {}, False, {"request": i, "predecessor": trace.predecessor[i]})
        want = tuple(t.path(r.nodes[i], r.nodes[prev]))
        if trace.path_log[i] != want:
            return LemmaReport(name, dig, {}, False, {"request": i, "path": trace.path_log[i], "direct": want})
        if synchronous:
            lat = trace.enqueue_time[i] - r.times[i]
            if abs(lat - r.dist[i, prev]) > tol:
                return LemmaReport(name, dig, {}, False, {"request": i, "latency": lat})
    return LemmaReport(name, dig, {}, True)


# -- suites ----------------------------------------------------------------

@dataclass
class SuiteOutcome:
    reports: list
    values: dict = field(default_factory=dict)

    @property
    def failures(self) -> list:
        return [rep for rep in self.reports if not rep.passed and not rep.advisory]

    @property
    def passed(self) -> bool:
        return not self.failures


def _chain_report(name, dig, links, advisory=False) -> LemmaReport:
    bad = [(a, b, la, lb) for a, b, la, lb in links if not _le(a, b)]
    values = {f"{la} <= {lb}": (a, b) for a, b, la, lb in links}
    return LemmaReport(name, dig, values, not bad, bad[0] if bad else None, advisory)


def sync_pipeline(t: Hst, r: RequestSet) -> dict:
    """Simulate, condense, attach request leaves, split and rebuild the spanning trees."""
    out = {"tree": t, "requests": r}
    trace = run_sync(t, r)
    out["trace"] = trace
    out["latencies"], out["cost"] = latency_costs(trace, r)
    rc = condense(r)
    out["condensed"] = rc
    trace_c = run_sync(t, rc)
    out["trace_condensed"] = trace_c
    out["cost_condensed"] = latency_costs(trace_c, rc)[1]
    ta, ra = attach_request_leaves(t, rc)
    out["attached"] = (ta, ra)
    order = trace_c.order
    ts, rs, records = split_hst(ta, ra, order)
    out["split"] = (ts, rs, records)
    trace_s = run_sync(ts, rs)
    out["trace_split"] = trace_s
    out["cost_split"] = latency_costs(trace_s, rs)[1]
    return out


def lemma_suite(t: Hst, r: RequestSet, exact_limit: int = offline.DEFAULT_EXACT_LIMIT) -> SuiteOutcome:
    """Every synchronous check on one instance plus the end-to-end constant chain."""
    dig = instance_digest(t, r)
    k = len(r)
    reports: list[LemmaReport] = []
    values: dict = {"requests": k, "digest": dig}
    if k == 1:
        values.update(cost=0.0, opt=0.0, ratio=math.nan, degenerate=True)
        reports.append(LemmaReport("degenerate-instance", dig, {}, True))
        return SuiteOutcome(reports, values)

    pipe = sync_pipeline(t, r)
    trace, cost = pipe["trace"], pipe["cost"]
    values["cost"] = cost
    reports.append(check_trace(trace, t, r, synchronous=True))

    part = block_partition(t, trace.order, r)
    bc = block_cost(part)
    values["block_counts"] = part.counts()
    reports.append(LemmaReport("block-cost", dig, {"block_cost": bc, "simulated": cost},
                               abs(bc - cost) <= TOL, None if abs(bc - cost) <= TOL else (bc, cost)))
    reports.append(check_block_properties(part, t, r))
    reports.append(check_distance_respecting_order(trace.order, t, r, name="greedy-order"))
    reports.append(check_distance_respecting_latency(trace, t, r, name="greedy-latency"))

    rc = pipe["condensed"]
    ok_c, wit = is_condensed(rc)
    same = pipe["trace_condensed"].order == trace.order
    same_cost = abs(pipe["cost_condensed"] - cost) <= TOL
    reports.append(LemmaReport("condense-preserves-arrow", dig,
                               {"condensed": ok_c, "order_equal": same, "cost": pipe["cost_condensed"]},
                               ok_c and same and same_cost, None if ok_c and same and same_cost else wit))
    order = pipe["trace_condensed"].order

    ta, ra = pipe["attached"]
    ts, rs, records = pipe["split"]
    values["splits"] = len(records)
    tr_s = pipe["trace_split"]
    reports.append(LemmaReport("split-preserves-order", dig, {"splits": len(records)},
                               tr_s.order == order, None if tr_s.order == order else (order, tr_s.order)))
    pa = block_partition(ta, order, ra)
    ps = block_partition(ts, order, rs)
    blocks_equal = pa.index_sets() == ps.index_sets()
    reports.append(LemmaReport("split-preserves-blocks", dig, {"counts": ps.counts()}, blocks_equal,
                               None if blocks_equal else (pa.counts(), ps.counts())))
    cost_equal = abs(pipe["cost_split"] - pipe["cost_condensed"]) <= TOL and abs(block_cost(ps) - cost) <= TOL
    reports.append(LemmaReport("split-preserves-cost", dig, {"cost": pipe["cost_split"]}, cost_equal,
                               None if cost_equal else (pipe["cost_split"], cost)))
    reports.append(check_split_separation(records, rs, dig))
    reports.append(check_split_inflation(ra, rs, dig))
    reports.append(check_split_fixed_point(ts, rs, order, dig))

    # spanning trees on the split tree
    sbb = build_sbb(order, ts, rs)
    sstar = build_sstar(ts, rs)
    mst_s = offline.manhattan_mst(None, rs)
    mst_o = offline.manhattan_mst(None, rc)
    cm_s = rs.manhattan_matrix()
    reports.append(check_subtree_connectivity(sbb, ts, rs, "successor-tree-connectivity"))
    reports.append(check_subtree_connectivity(sstar, ts, rs, "hierarchical-tree-connectivity"))
    reports.append(check_cut_lightest(sstar, cm_s, 4.0, name="hierarchical-tree-cut", digest=dig))
    cmp4 = check_mst_approx(sstar, mst_s, cm_s, 4.0, name="hierarchical-vs-mst", digest=dig)
    cmp4.passed = cmp4.passed and cmp4.values["hypothesis"] and _le(mst_s.total_manhattan, sstar.total_manhattan)
    cmp4.values.pop("edges", None)
    reports.append(cmp4)
    reports.append(check_distance_respecting_order(order, ts, rs, name="distance-respecting-order-split"))
    reports.append(check_per_subtree_approx(ts, rs, sbb, sstar, 3.0))
    reports.append(_chain_report("successor-vs-hierarchical", dig,
                                 [(sbb.total_manhattan, 3 * sstar.total_manhattan, "C(S)", "3 C(S*)")]))

    # the same comparison before splitting is informational only
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnsplitTreeWarning)
        sbb_u = build_sbb(order, t, rc)
        sstar_u = build_sstar(t, rc)
    reports.append(_chain_report("successor-vs-hierarchical-unsplit", dig,
                                 [(sbb_u.total_manhattan, 3 * sstar_u.total_manhattan, "C(S)", "3 C(S*)")],
                                 advisory=True))

    t_last = rs.times[order[-1]]
    arrow_vs_sbb = [(cost, sbb.total_manhattan, "cost", "C(S)")]
    reports.append(_chain_report("arrow-vs-successor-tree", dig, arrow_vs_sbb))
    reports.append(_chain_report("arrow-vs-successor-tree-telescoped", dig,
                                 [(t_last + cost, sbb.total_manhattan, "t_last + cost", "C(S)")], advisory=True))

    links = [
        (cost, sbb.total_manhattan, "cost", "C(S)"),
        (sbb.total_manhattan, 3 * sstar.total_manhattan, "C(S)", "3 C(S*)"),
        (3 * sstar.total_manhattan, 12 * mst_s.total_manhattan, "3 C(S*)", "12 MST_split"),
        (12 * mst_s.total_manhattan, 36 * mst_o.total_manhattan, "12 MST_split", "36 MST"),
    ]
    values.update(sbb=sbb.total_manhattan, sstar=sstar.total_manhattan,
                  mst_split=mst_s.total_manhattan, mst=mst_o.total_manhattan)
    lower = offline.opt_lower_bound(t, rc).total_cost
    values["opt_lower"] = lower
    if k <= min(exact_limit, offline.HARD_EXACT_LIMIT):
        opt_c = offline.opt_exact(t, rc, exact_limit)
        opt = offline.opt_exact(t, r, exact_limit)
        path = offline.min_ordering_manhattan(t, rc, exact_limit)
        manh_opt = offline.manhattan_path_cost(rc, opt_c.ordering)
        links += [
            (36 * mst_o.total_manhattan, 36 * path.total_cost, "36 MST", "36 min-path"),
            (36 * path.total_cost, 432 * opt_c.total_cost, "36 min-path", "432 opt(R')"),
            (432 * opt_c.total_cost, 432 * opt.total_cost, "432 opt(R')", "432 opt"),
        ]
        reports.append(_chain_report("manhattan-vs-offline", dig,
                                     [(manh_opt, 12 * opt_c.total_cost, "C_M(opt order)", "12 opt(R')"),
                                      (opt_c.total_cost, opt.total_cost, "opt(R')", "opt")]))
        values.update(opt=opt.total_cost, opt_method=opt.method)
        values["ratio"] = cost / opt.total_cost if opt.total_cost > 0 else (1.0 if cost == 0 else math.inf)
        reports.append(_chain_report("constant-bound", dig, [(cost, CHAIN_CONSTANT * opt.total_cost, "cost", "432 opt")]))
    else:
        links.append((36 * mst_o.total_manhattan, 432 * lower, "36 MST", "432 lower"))
        values.update(opt=lower, opt_method="lower-bound-mst")
        values["ratio"] = cost / lower if lower > 0 else (1.0 if cost == 0 else math.inf)
    reports.append(_chain_report("monotone-chain", dig, links))
    return SuiteOutcome(reports, values)


def check_split_separation(records, rs: RequestSet, digest: str = "") -> LemmaReport:
    worst = math.inf
    for rec in records:
        need = hst_delta(rec.level) - hst_delta(rec.level - 1)
        gap = min(rs.times[i] for i in rec.right) - max(rs.times[i] for i in rec.left)
        worst = min(worst, gap - need)
        if gap < need - TOL:
            return LemmaReport("split-time-separation", digest, {"gap": gap, "need": need}, False, rec)
    return LemmaReport("split-time-separation", digest, {"records": len(records), "min_slack": worst}, True)


def check_split_inflation(before: RequestSet, after: RequestSet, digest: str = "", factor: float = 3.0) -> LemmaReport:
    a = before.manhattan_matrix()
    b = after.manhattan_matrix()
    bad = b > factor * a + TOL
    worst = float(np.max(np.where(a > 0, b / np.where(a > 0, a, 1), 1.0))) if a.size else 1.0
    if bad.any():
        i, j = np.argwhere(bad)[0]
        return LemmaReport("split-manhattan-inflation", digest, {"max_factor": worst}, False,
                           {"pair": (int(i), int(j)), "before": float(a[i, j]), "after": float(b[i, j])})
    return LemmaReport("split-manhattan-inflation", digest, {"max_factor": worst}, True)


def check_split_fixed_point(ts: Hst, rs: RequestSet, order, digest: str = "") -> LemmaReport:
    _, _, again = split_hst(ts, rs, order)
    return LemmaReport("split-fixed-point", digest, {"further_splits": len(again)}, not again,
                       again[0] if again else None)


POLICY_GRID = ("sync", "scaled:0.5", "uniform:0.1:1.0", "adversarial-latest:0.01")


def async_suite(t, r: RequestSet, sched="uniform:0.1:1.0", seed=None) -> SuiteOutcome:
    """Checks that every asynchronous schedule must satisfy."""
    trace = run_async(t, r, sched, seed, instrument=True)
    lat, cost = latency_costs(trace, r)
    reports = [
        check_trace(trace, t, r, synchronous=False),
        check_first_visit(trace, r),
        check_delta_window(trace, t, r),
        check_async_distance_respecting(trace, t, r),
        check_delta_bounds(trace, t, r, exact=str(sched) == "sync"),
        check_distance_respecting_latency(trace, t, r, name="async-latency"),
    ]
    sbb = build_sbb(trace.order, t, r) if len(r) > 1 else None
    values = {"cost": cost, "scheduler": trace.scheduler, "seed": seed}
    if sbb is not None:
        reports.append(_chain_report("async-arrow-vs-successor-tree", r.digest(),
                                     [(cost, sbb.total_manhattan, "cost", "C(S)")]))
        values["sbb"] = sbb.total_manhattan
    return SuiteOutcome(reports, values)
