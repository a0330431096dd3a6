"""Exit criteria. Each test prints one PASS/FAIL line with the measured numbers."""

import math
import statistics

import numpy as np
import pytest

from arrowq import offline
from arrowq.analysis import CHAIN_CONSTANT, POLICY_GRID, async_suite, block_cost, block_partition, lemma_suite
from arrowq.arrow_sim import latency_costs, run_async, run_sync
from arrowq.experiment import ExperimentConfig, run_experiment
from arrowq.hst import build_frt_hst, frt_labels, label_tree_distances
from arrowq.metric_graph import apsp_metric, graph_from_spec
from arrowq.requests import RequestSet, condense, draw_workload, parse_workload

from conftest import golden_requests, golden_tree, random_instance

pytestmark = pytest.mark.acceptance
REL = 1e-9


@pytest.fixture
def emit(capsys):
    def _emit(number: int, name: str, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\ncriterion {number} {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    return _emit


def _le(a, b):
    return a <= b + REL * max(1.0, abs(b))


def _split_corpus(count: int = 500):
    """Instances whose condensed Arrow order triggers at least one split."""
    out = []
    seed = 10_000
    while len(out) < count:
        t, r = random_instance(seed, max_requests=12, spread=(5, 20, 60, 120), rounded=seed % 2 == 0)
        seed += 1
        suite = lemma_suite(t, r, exact_limit=10)
        if suite.values.get("splits", 0) > 0:
            out.append(suite)
    return out, seed - 10_000


@pytest.fixture(scope="module")
def split_corpus():
    return _split_corpus()


def test_cost_formula_identity(emit):
    worst = 0.0
    bad = []
    for seed in range(1000):
        t, r = random_instance(seed, max_requests=12, rounded=seed % 2 == 0)
        tr = run_sync(t, r)
        diff = abs(block_cost(block_partition(t, tr.order, r)) - latency_costs(tr, r)[1])
        worst = max(worst, diff)
        if diff > 1e-9:
            bad.append(seed)
    emit(1, "block-cost equals simulated cost", not bad, f"1000 instances, max |diff| {worst:g}, violations {len(bad)}")
    assert not bad


def test_split_preservation(emit, split_corpus):
    suites, tried = split_corpus
    names = ("condense-preserves-arrow", "split-preserves-order", "split-preserves-blocks",
             "split-preserves-cost", "split-time-separation", "split-manhattan-inflation", "split-fixed-point")
    fails = {n: 0 for n in names}
    factor = 0.0
    splits = 0
    for s in suites:
        splits += s.values["splits"]
        for rep in s.reports:
            if rep.lemma in fails and not rep.passed:
                fails[rep.lemma] += 1
            if rep.lemma == "split-manhattan-inflation":
                factor = max(factor, rep.values["max_factor"])
    total = sum(fails.values())
    emit(2, "splitting preserves order, blocks and cost", total == 0,
         f"{len(suites)} splitting instances of {tried} drawn, {splits} splits, max inflation {factor:.3f}, "
         f"violations {total}")
    assert total == 0, fails


def test_spanning_tree_chain(emit, split_corpus):
    suites, _ = split_corpus
    bad_low = bad_high = bad_sbb = 0
    r4 = r3 = 0.0
    for s in suites:
        v = s.values
        bad_low += not _le(v["mst_split"], v["sstar"])
        bad_high += not _le(v["sstar"], 4 * v["mst_split"])
        bad_sbb += not _le(v["sbb"], 3 * v["sstar"])
        if v["mst_split"] > 0:
            r4 = max(r4, v["sstar"] / v["mst_split"])
        if v["sstar"] > 0:
            r3 = max(r3, v["sbb"] / v["sstar"])
    total = bad_low + bad_high + bad_sbb
    emit(3, "MST <= S* <= 4 MST and successor tree <= 3 S*", total == 0,
         f"{len(suites)} instances, max S*/MST {r4:.3f}, max successor/S* {r3:.3f}, violations {total}")
    assert total == 0


def test_end_to_end_constant(emit):
    ratios = []
    bad = 0
    # random HST instances plus embedded graph instances
    for seed in range(600):
        t, r = random_instance(seed + 50_000, max_requests=10, rounded=seed % 2 == 0)
        cost = latency_costs(run_sync(t, r), r)[1]
        opt = offline.opt_exact(t, r, limit=10).total_cost
        bad += not _le(cost, CHAIN_CONSTANT * opt)
        ratios.append(cost / opt if opt > 0 else 1.0)
    rep = run_experiment(ExperimentConfig(graphs=("cycle:64", "grid:5x5", "geometric:32:0.3:3"),
                                          workload="one-shot:8", trials=100, seed=4, exact_limit=10))
    for row in rep.rows:
        if row["error"] or row["degenerate"]:
            bad += 1
            continue
        bad += row["opt_method"].startswith("exact") and not _le(row["cost"], CHAIN_CONSTANT * row["opt"])
        bad += bool(row["lemma_fail"]) or not row["dominance"]
        ratios.append(row["ratio"])
    emit(4, "Arrow cost <= 432 opt", bad == 0,
         f"{len(ratios)} instances, max ratio {max(ratios):.4f}, mean ratio {statistics.fmean(ratios):.4f}, "
         f"violations {bad}")
    assert bad == 0


def test_offline_cross_check(emit):
    mismatch = sandwich = 0
    n = 0
    seed = 0
    while n < 200:
        t, r = random_instance(seed + 90_000, max_requests=9, rounded=seed % 2 == 0)
        seed += 1
        if len(r) < 5:
            continue
        n += 1
        bf = offline.opt_exact(t, r, method="bruteforce").total_cost
        dp = offline.opt_exact(t, r, method="dp").total_cost
        mismatch += bf != dp
        rc = condense(r)
        lo = offline.opt_lower_bound(t, rc).total_cost
        ex_c = offline.opt_exact(t, rc).total_cost
        up = offline.opt_upper_bound_nn(t, r).total_cost
        up_c = offline.opt_upper_bound_nn(t, rc).total_cost
        sandwich += not (_le(lo, ex_c) and _le(ex_c, up_c) and _le(lo, bf) and _le(bf, up))
    # every ordering starting at the dummy, on small condensed sets
    orderings = violations = 0
    worst = 0.0
    for seed in range(400):
        t, r = random_instance(seed + 95_000, max_requests=7, rounded=seed % 2 == 0)
        rc = condense(r)
        k = len(rc)
        perms = np.hstack([np.zeros((math.factorial(k - 1), 1), dtype=np.int64), offline._permutations(k - 1)])
        lat = offline.offline_latency_matrix(rc)
        man = rc.manhattan_matrix()
        cl = lat[perms[:, :-1], perms[:, 1:]].sum(axis=1)
        cm = man[perms[:, :-1], perms[:, 1:]].sum(axis=1)
        orderings += len(perms)
        violations += int(np.sum(cm > 12 * cl + REL * np.maximum(1.0, 12 * cl)))
        pos = cl > 0
        if pos.any():
            worst = max(worst, float((cm[pos] / cl[pos]).max()))
    ok = mismatch == 0 and sandwich == 0 and violations == 0
    emit(5, "offline solvers agree and bounds hold", ok,
         f"{n} instances: brute force vs DP mismatches {mismatch}, bound violations {sandwich}; "
         f"{orderings} orderings: 12-factor violations {violations}, max Manhattan/offline {worst:.3f}")
    assert ok


def test_frt_contract(emit):
    specs = [f"cycle:{n}" for n in (16, 32, 48, 64)] + ["grid:4x4", "grid:5x8", "grid:8x8", "path:32"] + \
            [f"geometric:{n}:0.3:{s}" for n, s in ((16, 1), (32, 2), (48, 3), (64, 4))] + ["complete:24"]
    metrics = {s: np.asarray(apsp_metric(graph_from_spec(s)).dist) for s in specs}
    rng_seeds = np.random.SeedSequence(2024).generate_state(10_000, dtype=np.uint32)
    stretch = {s: [] for s in specs}
    dominance_fail = 0
    for i, seed in enumerate(rng_seeds):
        s = specs[i % len(specs)]
        d = metrics[s]
        labels, *_ = frt_labels(d, np.random.default_rng(int(seed)))
        dt = label_tree_distances(labels)
        iu, ju = np.triu_indices(d.shape[0], 1)
        dominance_fail += int(np.any(dt[iu, ju] < d[iu, ju] - 1e-9))
        stretch[s].append(float((dt[iu, ju] / d[iu, ju]).mean()))
    per = {s: statistics.fmean(v) / math.log2(metrics[s].shape[0]) for s, v in stretch.items()}
    xs = [math.log2(metrics[s].shape[0]) for s in specs]
    ys = [statistics.fmean(stretch[s]) for s in specs]
    fitted = sum(x * y for x, y in zip(xs, ys)) / sum(x * x for x in xs)
    flagged = sorted(s for s, c in per.items() if c > 16)
    emit(6, "tree distances dominate and stretch is logarithmic", dominance_fail == 0 and fitted <= 16,
         f"10000 samples on {len(specs)} metrics, dominance violations {dominance_fail}, fitted c {fitted:.3f}, "
         f"worst per-metric c {max(per.values()):.3f}, flagged {flagged or 'none'}")
    assert dominance_fail == 0
    assert fitted <= 16


def test_async_properties(emit):
    wanted = ("first-on-path", "broadcast-window", "async-distance-respecting")
    fails = {}
    traces = 0
    replay_bad = 0
    specs = ["cycle:16", "grid:4x4", "geometric:24:0.3:5"]
    metrics = [apsp_metric(graph_from_spec(s)) for s in specs]
    for i in range(125):
        if i % 2:
            t, r = random_instance(i + 70_000, max_requests=10, rounded=i % 4 == 1)
        else:
            m = metrics[(i // 2) % len(metrics)]
            t = build_frt_hst(m, i)
            pts, ts = draw_workload(m.point_count, parse_workload("poisson:1:8"), i + 1, m)
            r = RequestSet.from_points(t, pts[:12], ts[:12])
        for sched in POLICY_GRID:
            out = async_suite(t, r, sched, seed=i)
            traces += 1
            for rep in out.reports:
                if not rep.passed and not rep.advisory:
                    fails[rep.lemma] = fails.get(rep.lemma, 0) + 1
            if sched == "sync":
                a = run_sync(t, r, instrument=True)
                b = run_async(t, r, "sync", seed=i, instrument=True)
                same = (a.order == b.order and a.enqueue_time == b.enqueue_time and a.events == b.events
                        and a.delta == b.delta and a.path_log == b.path_log and a.dump() == b.dump())
                replay_bad += not same
    checked = {n: fails.get(n, 0) for n in wanted}
    ok = not fails and replay_bad == 0
    emit(7, "asynchronous first-visit, arrival window and distance-respecting", ok,
         f"{traces} traces over {len(POLICY_GRID)} policies, violations {checked}, other failures "
         f"{ {k: v for k, v in fails.items() if k not in wanted} or 'none'}, sync replay mismatches {replay_bad}")
    assert ok


def test_golden_instance(emit):
    t = golden_tree()
    r = golden_requests(t)
    tr = run_sync(t, r)
    lat, cost = latency_costs(tr, r)
    opt = offline.opt_exact(t, r).total_cost
    counts = block_partition(t, tr.order, r).counts()
    got = (tr.order, cost, opt, cost / opt, counts[0], counts[1])
    want = ((0, 2, 1), 2.0, 2.0, 1.0, 2, 1)
    emit(8, "worked instance", got == want, f"order {tr.order}, cost {cost}, opt {opt}, ratio {cost / opt}, "
                                           f"n(0)={counts[0]}, n(1)={counts[1]}")
    assert got == want


def test_cycle_trend(emit):
    graphs = tuple(f"cycle:{n}" for n in (16, 32, 64, 128))
    # exact limit 1 forces the lower-bound denominator for every row
    cfg = ExperimentConfig(graphs=graphs, workload="poisson:0.25:80", trials=20, seed=9, exact_limit=1)
    rep = run_experiment(cfg)
    s = rep.summary
    hard = sum(1 for row in rep.rows if not row["error"] and not row["degenerate"]
               and not _le(row["cost"], CHAIN_CONSTANT * row["opt"]))
    broken = s["errors"] + s["lemma_failures"] + s["dominance_violations"]
    means = ", ".join(f"n={g['n']}: {g['ratio_mean']:.3f}" for g in s["by_graph"])
    per_log = [g["ratio_mean"] / g["log2n"] for g in s["by_graph"]]
    ok = hard == 0 and broken == 0
    emit(9, "ratio against the lower bound on cycles", ok,
         f"mean ratio {means}; fitted c {s['fitted_c']:.3f}, ratio/log2 n from {per_log[0]:.3f} to {per_log[-1]:.3f}; "
         f"432-bound violations {hard}, errors or lemma failures {broken}")
    assert ok
