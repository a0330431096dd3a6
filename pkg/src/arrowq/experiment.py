"""Seeded end-to-end sweeps: graph, FRT tree, requests, Arrow, offline bounds, lemma checks."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import offline
from .analysis import async_suite, instance_digest, lemma_suite
from .arrow_sim import SimulationError, latency_costs, parse_policy, run_async
from .hst import build_frt_hst
from .metric_graph import apsp_metric, graph_from_spec
from .requests import RequestSet, condense, draw_workload, parse_workload

FORMATS = ("csv", "json")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    graphs: tuple[str, ...] = ("cycle:16",)
    workload: str = "one-shot:4"
    sched: str = "sync"
    trials: int = 1
    seed: int = 0
    seeds: tuple[int, ...] | None = None
    exact_limit: int = 10
    out: str | None = None
    format: str = "csv"
    lemmas: bool = True
    dummy: int = 0
    # explicit (point, time) pairs, used when the workload is "explicit"
    requests: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        if isinstance(self.graphs, str):
            self.graphs = (self.graphs,)
        self.graphs = tuple(self.graphs)
        if self.seeds is not None:
            self.seeds = tuple(int(s) for s in self.seeds)
        self.requests = tuple((int(p), float(x)) for p, x in self.requests)
        self.validate()

    def validate(self) -> None:
        if not self.graphs:
            raise ConfigError("at least one graph is required")
        if self.trials < 1:
            raise ConfigError(f"trials must be positive, got {self.trials}")
        if self.seeds is not None and len(self.seeds) != self.trials:
            raise ConfigError(f"{len(self.seeds)} explicit seeds for {self.trials} trials")
        if self.exact_limit < 1:
            raise ConfigError(f"exact limit must be positive, got {self.exact_limit}")
        if self.format not in FORMATS:
            raise ConfigError(f"unknown format {self.format!r}; expected one of {', '.join(FORMATS)}")
        try:
            parse_policy(self.sched)
            self.workload_model()
        except (ValueError, SimulationError) as exc:
            raise ConfigError(str(exc)) from exc

    def workload_model(self) -> dict:
        if self.workload == "explicit":
            return {"kind": "explicit", "requests": list(self.requests)}
        return parse_workload(self.workload)

    def trial_seeds(self) -> list[int]:
        if self.seeds is not None:
            return list(self.seeds)
        state = np.random.SeedSequence(self.seed).generate_state(self.trials, dtype=np.uint32)
        return [int(x) for x in state]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["graphs"] = list(self.graphs)
        d["seeds"] = None if self.seeds is None else list(self.seeds)
        d["requests"] = [list(p) for p in self.requests]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")
        d = dict(d)
        if "graph" in d:
            raise ConfigError("use 'graphs'")
        if "requests" in d:
            d["requests"] = tuple(tuple(p) for p in d["requests"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)


def trial_streams(seed: int) -> dict[str, np.random.SeedSequence]:
    """Independent child streams for one trial.

    Requests, the tree and link delays each get their own spawned child, so the
    request draw never sees the tree's coins.
    """
    req, tree, delay = np.random.SeedSequence(seed).spawn(3)
    return {"requests": req, "tree": tree, "delays": delay}


COLUMNS = (
    "trial", "seed", "graph", "n", "workload", "sched", "requests", "digest", "height",
    "cost", "opt", "opt_method", "ratio", "opt_graph", "opt_graph_method", "ratio_graph",
    "lemma_pass", "lemma_fail", "failed_lemmas", "stretch_mean", "stretch_max",
    "dominance", "splits", "degenerate", "error",
)


@dataclass
class Report:
    config: dict
    rows: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def _ratio(cost: float, opt: float) -> float:
    if opt > 0:
        return cost / opt
    return math.nan if cost == 0 else math.inf


def stretch_stats(t, metric) -> dict:
    """Pairwise stretch of tree distances over graph distances, and dominance."""
    n = metric.point_count
    if n < 2:
        return {"stretch_mean": 1.0, "stretch_max": 1.0, "dominance": True}
    leaves = [t.leaf_map[p] for p in range(n)]
    iu, ju = np.triu_indices(n, 1)
    dt = np.array([t.distance(leaves[a], leaves[b]) for a, b in zip(iu.tolist(), ju.tolist())])
    dg = metric.dist[iu, ju]
    s = dt / dg
    return {
        "stretch_mean": float(s.mean()),
        "stretch_max": float(s.max()),
        "dominance": bool(np.all(dt >= dg - 1e-9)),
    }


def _best_opt(space, r: RequestSet, limit: int) -> tuple[float, str]:
    if len(r) <= min(limit, offline.HARD_EXACT_LIMIT):
        res = offline.opt_exact(space, r, limit)
    else:
        res = offline.opt_lower_bound(space, condense(r))
    return res.total_cost, res.method


def _metric(cache: dict, graph: str):
    if graph not in cache:
        cache[graph] = apsp_metric(graph_from_spec(graph))
    return cache[graph]


def run_trial(cfg: ExperimentConfig, graph: str, index: int, seed: int, metric) -> dict:
    row = {c: "" for c in COLUMNS}
    row.update(trial=index, seed=seed, graph=graph, n=metric.point_count,
               workload=cfg.workload, sched=cfg.sched, degenerate=False)
    streams = trial_streams(seed)
    # requests first, from their own stream and without the tree
    pts, ts = draw_workload(metric.point_count, cfg.workload_model(), streams["requests"], metric, cfg.dummy)
    t = build_frt_hst(metric, streams["tree"])
    r = RequestSet.from_points(t, pts, ts)
    row.update(requests=len(r), digest=instance_digest(t, r), height=t.height)
    row.update(stretch_stats(t, metric))
    trace = run_async(t, r, cfg.sched, seed=streams["delays"])
    cost = latency_costs(trace, r)[1]
    row["cost"] = cost
    if len(r) == 1:
        row.update(opt=0.0, opt_method="none", ratio=math.nan, opt_graph=0.0,
                   opt_graph_method="none", ratio_graph=math.nan, degenerate=True,
                   lemma_pass=0, lemma_fail=0, splits=0)
        return row
    opt, method = _best_opt(t, r, cfg.exact_limit)
    row.update(opt=opt, opt_method=method, ratio=_ratio(cost, opt))
    rg = RequestSet(pts, ts, metric, pts)
    opt_g, method_g = _best_opt(metric, rg, cfg.exact_limit)
    row.update(opt_graph=opt_g, opt_graph_method=method_g, ratio_graph=_ratio(cost, opt_g))
    if cfg.lemmas:
        out = lemma_suite(t, r, cfg.exact_limit)
        reports = list(out.reports)
        if parse_policy(cfg.sched).name != "sync":
            reports += async_suite(t, r, cfg.sched, seed=streams["delays"]).reports
        failed = [rep.lemma for rep in reports if not rep.passed and not rep.advisory]
        row.update(lemma_pass=len(reports) - len(failed), lemma_fail=len(failed),
                   failed_lemmas=";".join(failed), splits=out.values.get("splits", 0))
    else:
        row.update(lemma_pass=0, lemma_fail=0, splits="")
    return row


def _fit_through_origin(xs, ys) -> float:
    den = sum(x * x for x in xs)
    return sum(x * y for x, y in zip(xs, ys)) / den if den > 0 else math.nan


def summarize(rows: list[dict]) -> dict:
    good = [row for row in rows if not row["error"] and not row["degenerate"]]
    ratios = [row["ratio"] for row in good if math.isfinite(row["ratio"])]
    out = {
        "trials": len(rows),
        "errors": sum(1 for row in rows if row["error"]),
        "degenerate": sum(1 for row in rows if row["degenerate"]),
        "lemma_failures": sum(int(row["lemma_fail"] or 0) for row in rows),
        "dominance_violations": sum(1 for row in rows if row["dominance"] is False),
    }
    if ratios:
        out.update(ratio_mean=statistics.fmean(ratios), ratio_median=statistics.median(ratios),
                   ratio_max=max(ratios))
    by_graph = {}
    for row in good:
        by_graph.setdefault(row["graph"], []).append(row)
    groups = []
    for graph, items in by_graph.items():
        n = items[0]["n"]
        rs = [row["ratio"] for row in items if math.isfinite(row["ratio"])]
        ss = [row["stretch_mean"] for row in items]
        groups.append({
            "graph": graph,
            "n": n,
            "log2n": math.log2(n) if n > 1 else 0.0,
            "ratio_mean": statistics.fmean(rs) if rs else math.nan,
            "stretch_mean": statistics.fmean(ss) if ss else math.nan,
        })
    out["by_graph"] = groups
    pts = [(g["log2n"], g["ratio_mean"]) for g in groups if g["log2n"] > 0 and math.isfinite(g["ratio_mean"])]
    # least-squares c for ratio ~ c * log2 n, plus the tightest envelope
    out["fitted_c"] = _fit_through_origin([x for x, _ in pts], [y for _, y in pts]) if pts else math.nan
    out["envelope_c"] = max((y / x for x, y in pts), default=math.nan)
    sp = [(g["log2n"], g["stretch_mean"]) for g in groups if g["log2n"] > 0]
    out["stretch_fitted_c"] = _fit_through_origin([x for x, _ in sp], [y for _, y in sp]) if sp else math.nan
    return out


def run_experiment(cfg: ExperimentConfig) -> Report:
    cfg.validate()
    metrics: dict = {}
    rows = []
    seeds = cfg.trial_seeds()
    for graph in cfg.graphs:
        try:
            metric = _metric(metrics, graph)
        except Exception as exc:  # a bad graph fails its rows, not the sweep
            for i, seed in enumerate(seeds):
                row = {c: "" for c in COLUMNS}
                row.update(trial=i, seed=seed, graph=graph, workload=cfg.workload, sched=cfg.sched,
                           degenerate=False, error=f"{type(exc).__name__}: {exc}")
                rows.append(row)
            continue
        for i, seed in enumerate(seeds):
            try:
                rows.append(run_trial(cfg, graph, i, seed, metric))
            except Exception as exc:
                row = {c: "" for c in COLUMNS}
                row.update(trial=i, seed=seed, graph=graph, n=metric.point_count, workload=cfg.workload,
                           sched=cfg.sched, degenerate=False, error=f"{type(exc).__name__}: {exc}")
                rows.append(row)
    return Report(cfg.to_dict(), rows, summarize(rows))


def _cell(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {k: jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    return x


def rows_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in rows:
        w.writerow([_cell(row.get(c, "")) for c in COLUMNS])
    return buf.getvalue()


def summary_csv(summary: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("graph", "n", "log2n", "ratio_mean", "stretch_mean"))
    for g in summary.get("by_graph", []):
        w.writerow([_cell(g[c]) for c in ("graph", "n", "log2n", "ratio_mean", "stretch_mean")])
    return buf.getvalue()


def report_json(rep: Report) -> str:
    doc = {"config": rep.config, "summary": rep.summary, "rows": rep.rows}
    return json.dumps(jsonable(doc), sort_keys=True, indent=2) + "\n"


def emit_report(rep: Report, path, fmt: str = "csv") -> list[Path]:
    """Write the report; CSV gives a rows file plus a per-graph summary file."""
    if fmt not in FORMATS:
        raise ConfigError(f"unknown format {fmt!r}")
    path = Path(path)
    written = []
    try:
        if fmt == "json":
            path.write_text(report_json(rep), encoding="utf-8")
            written.append(path)
        else:
            path.write_text(rows_csv(rep.rows), encoding="utf-8")
            side = path.with_name(path.stem + ".summary.csv")
            side.write_text(summary_csv(rep.summary), encoding="utf-8")
            written += [path, side]
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return written
