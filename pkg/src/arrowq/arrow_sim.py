"""Discrete-event simulation of the Arrow queueing protocol on a tree."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

REAL, VIRTUAL = 0, 1
KIND_NAMES = {REAL: "real", VIRTUAL: "virtual"}


class SimulationError(RuntimeError):
    pass


class DelayOutOfRange(SimulationError):
    pass


# -- delay policies --------------------------------------------------------

class DelayPolicy:
    name = "policy"

    def delay(self, request: int, weight: float, now: float, sim: "_Sim") -> float:
        raise NotImplementedError

    def describe(self) -> str:
        return self.name


class SyncDelay(DelayPolicy):
    name = "sync"

    def delay(self, request, weight, now, sim):
        return weight


@dataclass
class ScaledDelay(DelayPolicy):
    factor: float
    name = "scaled"

    def __post_init__(self):
        if not 0 < self.factor <= 1:
            raise DelayOutOfRange(f"scale factor must lie in (0, 1], got {self.factor}")

    def delay(self, request, weight, now, sim):
        return self.factor * weight

    def describe(self):
        return f"scaled:{self.factor!r}"


@dataclass
class UniformDelay(DelayPolicy):
    lo: float
    hi: float
    name = "uniform"

    def __post_init__(self):
        if not 0 < self.lo <= self.hi <= 1:
            raise DelayOutOfRange(f"uniform bounds must satisfy 0 < lo <= hi <= 1, got {self.lo}, {self.hi}")

    def delay(self, request, weight, now, sim):
        return weight * float(sim.rng.uniform(self.lo, self.hi))

    def describe(self):
        return f"uniform:{self.lo!r}:{self.hi!r}"


@dataclass
class AdversarialLatest(DelayPolicy):
    """Fast links for the most recently issued request, slow ones for everyone else."""

    eps: float = 0.01
    name = "adversarial-latest"

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise DelayOutOfRange(f"eps must lie in (0, 1], got {self.eps}")

    def delay(self, request, weight, now, sim):
        return self.eps * weight if request == sim.latest_issued else weight

    def describe(self):
        return f"adversarial-latest:{self.eps!r}"


POLICY_NAMES = ("sync", "scaled", "uniform", "adversarial-latest")


def parse_policy(text) -> DelayPolicy:
    if isinstance(text, DelayPolicy):
        return text
    kind, _, rest = str(text).partition(":")
    args = [float(a) for a in rest.split(":")] if rest else []
    if kind == "sync":
        return SyncDelay()
    if kind == "scaled":
        return ScaledDelay(args[0] if args else 0.5)
    if kind == "uniform":
        lo = args[0] if len(args) > 0 else 0.1
        hi = args[1] if len(args) > 1 else 1.0
        return UniformDelay(lo, hi)
    if kind == "adversarial-latest":
        return AdversarialLatest(args[0] if args else 0.01)
    raise SimulationError(f"unknown delay policy {text!r}; expected one of {', '.join(POLICY_NAMES)}")


# -- trace -----------------------------------------------------------------

@dataclass
class ExecutionTrace:
    order: tuple[int, ...]
    predecessor: tuple[int, ...]
    enqueue_time: tuple[float, ...]
    path_log: tuple[tuple[int, ...], ...]
    visit_step: dict = field(repr=False)
    delta: dict | None = field(default=None, repr=False)
    events: tuple = field(default=(), repr=False)
    scheduler: str = "sync"
    seed: object = None
    enqueue_exact: tuple = field(default=(), repr=False, compare=False)

    def position(self) -> list[int]:
        pos = [0] * len(self.order)
        for p, i in enumerate(self.order):
            pos[i] = p
        return pos

    def dump(self) -> str:
        lines = [f"{t!r} {u} {req} {kind} {action}" for t, u, req, kind, action in self.events]
        return "\n".join(lines) + ("\n" if lines else "")


class _Sim:
    def __init__(self, tree, r, policy: DelayPolicy, seed, instrument: bool):
        self.tree = tree
        self.r = r
        self.policy = policy
        self.rng = np.random.default_rng(seed)
        self.instrument = instrument
        n = tree.node_count
        k = len(r)
        v0 = r.nodes[0]
        # initial arrows point along the tree towards the dummy's node
        self.arrow = [-1] * n
        self.arrow[v0] = v0
        stack = [v0]
        while stack:
            u = stack.pop()
            for x in tree.neighbors(u):
                if self.arrow[x] == -1 and x != v0:
                    self.arrow[x] = u
                    stack.append(x)
        self.last = [-1] * n
        self.last[v0] = 0
        self.pred = [-1] * k
        self.enq = [Fraction(0)] * k
        self.enq_set = [False] * k
        self.enq_set[0] = True
        self.path: list[list[int]] = [[] for _ in range(k)]
        self.path[0] = [v0]
        self.visit: dict[tuple[int, int], int] = {}
        self.delta: dict[tuple[int, int], float] = {} if instrument else None
        self.events: list = []
        self.heap: list = []
        self.seq = 0
        self.step = 0
        self.latest_issued = 0
        self.latest_rank = 0

    def push(self, time, kind, request, payload):
        key = (time, kind, self.r.rank[request], self.seq)
        self.seq += 1
        heapq.heappush(self.heap, (key, payload))

    def send(self, request, u, x, now, kind):
        w = self.tree.edge_weight(u, x)
        if kind == VIRTUAL or w == 0:
            d = w
        else:
            d = self.policy.delay(request, w, float(now), self)
            if not (0 < d <= w):
                raise DelayOutOfRange(f"delay {d} for edge of length {w} is outside (0, w]")
        self.push(now + Fraction(d), kind, request, ("arrive", request, x, u))

    def broadcast(self, request, u, skip, now):
        if not self.instrument:
            return
        for x in self.tree.neighbors(u):
            if x not in skip:
                self.send(request, u, x, now, VIRTUAL)

    def mark(self, request, u, now):
        if self.instrument and (request, u) not in self.delta:
            self.delta[(request, u)] = float(now - self.r.exact_times[request])

    def log(self, now, u, request, kind, action):
        self.events.append((float(now), u, request, KIND_NAMES[kind], action))

    def run(self):
        r = self.r
        for i in range(1, len(r)):
            self.push(r.exact_times[i], REAL, i, ("issue", i, r.nodes[i], -1))
        if self.instrument:
            self.mark(0, r.nodes[0], Fraction(0))
            self.broadcast(0, r.nodes[0], (), Fraction(0))
        while self.heap:
            key, (what, req, u, frm) = heapq.heappop(self.heap)
            now, kind = key[0], key[1]
            if kind == VIRTUAL:
                if (req, u) not in self.delta:
                    self.mark(req, u, now)
                    self.log(now, u, req, kind, "virtual")
                    self.broadcast(req, u, (frm,), now)
                continue
            self.step += 1
            self.visit[(req, u)] = self.step
            self.mark(req, u, now)
            if what == "issue":
                if r.rank[req] >= self.latest_rank:
                    self.latest_rank = r.rank[req]
                    self.latest_issued = req
                self.path[req] = [u]
                if self.arrow[u] == u:
                    self.pred[req] = self.last[u]
                    self.enq[req] = now
                    self.enq_set[req] = True
                    self.last[u] = req
                    self.log(now, u, req, kind, "issue-local")
                    self.broadcast(req, u, (), now)
                else:
                    x = self.arrow[u]
                    self.arrow[u] = u
                    self.last[u] = req
                    self.log(now, u, req, kind, "issue-send")
                    self.send(req, u, x, now, REAL)
                    self.broadcast(req, u, (x,), now)
            else:
                self.path[req].append(u)
                if self.arrow[u] == u:
                    self.pred[req] = self.last[u]
                    self.enq[req] = now
                    self.enq_set[req] = True
                    self.arrow[u] = frm
                    self.log(now, u, req, kind, "enqueue")
                    self.broadcast(req, u, (frm,), now)
                else:
                    x = self.arrow[u]
                    self.arrow[u] = frm
                    self.log(now, u, req, kind, "forward")
                    self.send(req, u, x, now, REAL)
                    self.broadcast(req, u, (frm, x), now)
        if not all(self.enq_set):
            missing = [i for i, ok in enumerate(self.enq_set) if not ok]
            raise SimulationError(f"requests never enqueued: {missing}")
        succ = {}
        for i in range(1, len(r)):
            p = self.pred[i]
            if p in succ:
                raise SimulationError(f"requests {succ[p]} and {i} share predecessor {p}")
            succ[p] = i
        order = [0]
        while order[-1] in succ:
            order.append(succ[order[-1]])
        if len(order) != len(r):
            raise SimulationError("predecessor links do not form a single queue")
        return ExecutionTrace(
            order=tuple(order),
            predecessor=tuple(self.pred),
            enqueue_time=tuple(float(x) for x in self.enq),
            enqueue_exact=tuple(self.enq),
            path_log=tuple(tuple(p) for p in self.path),
            visit_step=self.visit,
            delta=self.delta,
            events=tuple(self.events),
            scheduler=self.policy.describe(),
            seed=None,
        )


def run_async(t, r, sched="sync", seed=None, instrument: bool = False) -> ExecutionTrace:
    """Simulate Arrow with per-hop delays drawn from ``sched``.

    Simultaneous events are processed by time, then real before virtual, then
    the request's issue rank (issue time, ties by index unless the set carries
    its own rank), then creation order.
    """
    policy = parse_policy(sched)
    trace = _Sim(t, r, policy, seed, instrument).run()
    trace.seed = seed
    return trace


def run_sync(t, r, instrument: bool = False) -> ExecutionTrace:
    return run_async(t, r, SyncDelay(), None, instrument)


def delta_profile(trace: ExecutionTrace, t=None, r=None) -> dict[tuple[int, int], float]:
    """Map ``(request, node)`` to the time the request's real or virtual
    message needs to reach the node."""
    if trace.delta is None:
        raise SimulationError("trace was recorded without instrumentation; rerun with instrument=True")
    return dict(trace.delta)


def latency_costs(trace: ExecutionTrace, r) -> tuple[list[float], float]:
    """Per-position enqueue latencies and their sum."""
    order = trace.order
    exact = len(trace.enqueue_exact) == len(order)
    enq = trace.enqueue_exact if exact else trace.enqueue_time
    ts = r.exact_times if exact else r.times
    lat = []
    for p in range(1, len(order)):
        cur, prev = order[p], order[p - 1]
        lat.append(float(max(enq[cur], ts[prev]) - ts[cur]))
    return lat, float(sum(lat))


def arrow_cost(t, r, sched="sync", seed=None) -> float:
    return latency_costs(run_async(t, r, sched, seed), r)[1]
