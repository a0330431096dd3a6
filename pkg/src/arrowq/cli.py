"""Command line entry point: ``arrowq build-hst|simulate|offline|analyze|sweep``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import offline
from .analysis import async_suite, lemma_suite
from .arrow_sim import latency_costs, parse_policy, run_async
from .experiment import (
    ConfigError,
    ExperimentConfig,
    jsonable,
    emit_report,
    report_json,
    rows_csv,
    run_experiment,
    trial_streams,
)
from .hst import Hst, build_frt_hst, verify_hst
from .metric_graph import apsp_metric, graph_from_spec
from .requests import RequestSet, condense, draw_workload, is_condensed, load_requests

# flag name -> config field
FLAG_FIELDS = {
    "graph": "graphs",
    "workload": "workload",
    "sched": "sched",
    "trials": "trials",
    "seed": "seed",
    "exact_limit": "exact_limit",
    "out": "out",
    "format": "format",
}


def _add_common(p: argparse.ArgumentParser, sweep: bool = False) -> None:
    p.add_argument("--config", help="JSON config file; explicit flags override it")
    if sweep:
        p.add_argument("--graph", action="append", help="graph generator or edge-list file (repeatable)")
    else:
        p.add_argument("--graph", help="graph generator (cycle:64, grid:4x4, ...) or edge-list file")
    p.add_argument("--workload", help="one-shot:K, poisson:RATE:HORIZON or burst:B:S[:W[:SPACING]]")
    p.add_argument("--sched", help="sync, scaled:F, uniform:LO:HI or adversarial-latest:EPS")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--exact-limit", dest="exact_limit", type=int, help="largest |R| solved exactly")
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.add_argument("--format", choices=("csv", "json"), help="report format")
    p.add_argument("--trials", type=int, help="number of seeded trials")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arrowq", description="Arrow queueing on FRT trees: simulate, bound, check")
    sub = parser.add_subparsers(dest="verb", required=True)
    p = sub.add_parser("build-hst", help="embed a graph metric into a random 2-HST")
    _add_common(p)
    for name in ("simulate", "offline", "analyze"):
        p = sub.add_parser(name, help={
            "simulate": "run Arrow and print order and cost",
            "offline": "optimal offline cost or its bounds",
            "analyze": "run every lemma check on one instance",
        }[name])
        _add_common(p)
        p.add_argument("--hst", help="tree file written by build-hst (instead of embedding --graph)")
        p.add_argument("--requests", help="request file: 'dummy P' then 'point time' lines")
        if name == "simulate":
            p.add_argument("--trace", action="store_true", help="write the event log instead of a summary")
    p = sub.add_parser("sweep", help="seeded experiment sweep")
    _add_common(p, sweep=True)
    p.add_argument("--no-lemmas", dest="lemmas", action="store_false", default=None, help="skip lemma checks")
    p.add_argument("--print-config", action="store_true", help="print the effective config and exit")
    return parser


def load_config(args) -> ExperimentConfig:
    base = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(base, dict):
            raise ConfigError("config must be a JSON object")
    for flag, key in FLAG_FIELDS.items():
        val = getattr(args, flag, None)
        if val is None:
            continue
        base[key] = [val] if key == "graphs" and isinstance(val, str) else val
    if getattr(args, "lemmas", None) is not None:
        base["lemmas"] = args.lemmas
    return ExperimentConfig.from_dict(base)


def _write(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _instance(args, cfg: ExperimentConfig):
    """Tree and request set for the single-instance verbs."""
    streams = trial_streams(cfg.seed)
    metric = None
    if args.hst:
        t = Hst.from_text(Path(args.hst).read_text(encoding="utf-8"))
    else:
        metric = apsp_metric(graph_from_spec(cfg.graphs[0]))
        t = build_frt_hst(metric, streams["tree"])
    points = len(t.leaf_map)
    if args.requests:
        pts, ts = load_requests(args.requests)
    else:
        pts, ts = draw_workload(points, cfg.workload_model(), streams["requests"], metric, cfg.dummy)
    return t, RequestSet.from_points(t, pts, ts), streams


def cmd_build_hst(args, cfg) -> int:
    metric = apsp_metric(graph_from_spec(cfg.graphs[0]))
    t = build_frt_hst(metric, trial_streams(cfg.seed)["tree"])
    problems = verify_hst(t)
    _write(t.to_text(), cfg.out)
    print(f"height {t.height} nodes {t.node_count} points {len(t.leaf_map)} problems {len(problems)}", file=sys.stderr)
    return 1 if problems else 0


def cmd_simulate(args, cfg) -> int:
    t, r, streams = _instance(args, cfg)
    trace = run_async(t, r, cfg.sched, seed=streams["delays"])
    if args.trace:
        _write(trace.dump(), cfg.out)
        return 0
    lat, cost = latency_costs(trace, r)
    doc = {
        "sched": parse_policy(cfg.sched).describe(),
        "order": list(trace.order),
        "latencies": lat,
        "cost": cost,
    }
    _write(json.dumps(doc, sort_keys=True) + "\n", cfg.out)
    return 0


def cmd_offline(args, cfg) -> int:
    t, r, _ = _instance(args, cfg)
    doc = {"requests": len(r)}
    if len(r) <= min(cfg.exact_limit, offline.HARD_EXACT_LIMIT):
        res = offline.opt_exact(t, r, cfg.exact_limit)
        doc.update(opt=res.total_cost, ordering=list(res.ordering), method=res.method)
    rc = r if is_condensed(r)[0] else condense(r)
    doc["lower_bound"] = offline.opt_lower_bound(t, rc).total_cost
    doc["lower_bound_condensed"] = rc is not r
    up = offline.opt_upper_bound_nn(t, r)
    doc.update(upper_bound=up.total_cost, upper_ordering=list(up.ordering))
    _write(json.dumps(doc, sort_keys=True) + "\n", cfg.out)
    return 0


def cmd_analyze(args, cfg) -> int:
    t, r, streams = _instance(args, cfg)
    out = lemma_suite(t, r, cfg.exact_limit)
    reports = list(out.reports)
    if parse_policy(cfg.sched).name != "sync":
        reports += async_suite(t, r, cfg.sched, seed=streams["delays"]).reports
    lines = [rep.line() for rep in reports]
    ratio = out.values.get("ratio")
    lines.append(f"cost {out.values.get('cost')!r} opt {out.values.get('opt')!r} ratio {ratio!r}")
    _write("\n".join(lines) + "\n", cfg.out)
    failed = [rep for rep in reports if not rep.passed and not rep.advisory]
    return 1 if failed else 0


def cmd_sweep(args, cfg) -> int:
    if args.print_config:
        sys.stdout.write(cfg.to_json())
        return 0
    rep = run_experiment(cfg)
    if cfg.out:
        emit_report(rep, cfg.out, cfg.format)
    else:
        sys.stdout.write(report_json(rep) if cfg.format == "json" else rows_csv(rep.rows))
    s = rep.summary
    brief = {k: s[k] for k in ("trials", "errors", "degenerate", "lemma_failures", "dominance_violations",
                               "ratio_mean", "ratio_median", "ratio_max", "fitted_c") if k in s}
    print(json.dumps(jsonable(brief), sort_keys=True), file=sys.stderr)
    return 1 if s["errors"] or s["lemma_failures"] or s["dominance_violations"] else 0


COMMANDS = {
    "build-hst": cmd_build_hst,
    "simulate": cmd_simulate,
    "offline": cmd_offline,
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        return COMMANDS[args.verb](args, cfg)
    except (ValueError, OSError) as exc:
        print(f"arrowq: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
