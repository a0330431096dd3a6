import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arrowq.experiment import (
    COLUMNS,
    ConfigError,
    ExperimentConfig,
    Report,
    emit_report,
    report_json,
    rows_csv,
    run_experiment,
    summarize,
    trial_streams,
)
from arrowq.metric_graph import apsp_metric, cycle_graph
from arrowq.requests import draw_workload, parse_workload


def golden_config(**kw):
    base = dict(graphs=("path:2",), workload="explicit", requests=((1, 0.0), (0, 1.0)), trials=1)
    base.update(kw)
    return ExperimentConfig(**base)


def test_golden_row_ratio_one():
    rep = run_experiment(golden_config())
    row = rep.rows[0]
    assert row["error"] == ""
    assert row["cost"] == 2.0 and row["opt"] == 2.0 and row["ratio"] == 1.0
    assert row["lemma_fail"] == 0


def test_dummy_only_row_is_degenerate():
    rep = run_experiment(golden_config(requests=()))
    row = rep.rows[0]
    assert row["degenerate"] and math.isnan(row["ratio"])
    assert rep.summary["degenerate"] == 1 and "ratio_mean" not in rep.summary


@settings(max_examples=25, deadline=None)
@given(st.lists(st.sampled_from(["cycle:8", "grid:3x3", "path:5"]), min_size=1, max_size=3),
       st.sampled_from(["one-shot:3", "poisson:0.5:10", "burst:2:2"]),
       st.sampled_from(["sync", "scaled:0.5", "uniform:0.1:1.0"]),
       st.integers(1, 5), st.integers(0, 10**6), st.booleans(), st.sampled_from(["csv", "json"]))
def test_config_roundtrip(graphs, workload, sched, trials, seed, lemmas, fmt):
    cfg = ExperimentConfig(graphs=tuple(graphs), workload=workload, sched=sched, trials=trials,
                           seed=seed, lemmas=lemmas, format=fmt)
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg


@pytest.mark.parametrize("kw", [
    {"trials": 0}, {"format": "xml"}, {"sched": "warp"}, {"workload": "nope:1"},
    {"exact_limit": 0}, {"seeds": (1, 2)}, {"graphs": ()},
])
def test_bad_configs(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw)


def test_bad_json_config():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("{")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json('{"color": 1}')


def test_explicit_seeds_and_master_seed():
    cfg = ExperimentConfig(trials=3, seed=4)
    assert cfg.trial_seeds() == ExperimentConfig(trials=3, seed=4).trial_seeds()
    assert len(set(cfg.trial_seeds())) == 3
    assert ExperimentConfig(trials=2, seeds=(5, 6)).trial_seeds() == [5, 6]


def test_request_stream_ignores_tree_stream():
    # the requests depend only on their own child stream
    m = apsp_metric(cycle_graph(16))
    s = trial_streams(9)
    model = parse_workload("poisson:1:10")
    a = draw_workload(16, model, s["requests"], m)
    np.random.default_rng(s["tree"]).random(1000)
    b = draw_workload(16, model, trial_streams(9)["requests"], m)
    assert a == b
    keys = {name: ss.spawn_key for name, ss in s.items()}
    assert len(set(keys.values())) == 3


def test_rows_reproducible_from_seed():
    cfg = ExperimentConfig(graphs=("cycle:16",), workload="one-shot:5", trials=3, seed=2)
    rep = run_experiment(cfg)
    again = run_experiment(ExperimentConfig(graphs=("cycle:16",), workload="one-shot:5",
                                            trials=1, seeds=(rep.rows[2]["seed"],)))
    a, b = dict(rep.rows[2]), dict(again.rows[0])
    a.pop("trial"), b.pop("trial")
    assert a == b


def test_errors_do_not_abort_sweep():
    rep = run_experiment(ExperimentConfig(graphs=("missing-file.txt", "cycle:8"), trials=2))
    assert [bool(row["error"]) for row in rep.rows] == [True, True, False, False]
    assert rep.summary["errors"] == 2


def test_async_sweep_rows():
    rep = run_experiment(ExperimentConfig(graphs=("grid:3x3",), workload="burst:2:3", sched="uniform:0.1:1.0",
                                          trials=3, seed=1))
    assert rep.summary["lemma_failures"] == 0
    assert all(row["dominance"] for row in rep.rows)


def test_empty_report_is_header_only(tmp_path):
    text = rows_csv([])
    assert text == ",".join(COLUMNS) + "\n"
    out = emit_report(Report({}, [], summarize([])), tmp_path / "r.csv")
    assert out[0].read_text() == text


def test_one_row_two_lines_and_byte_stable(tmp_path):
    cfg = golden_config()
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_report(run_experiment(cfg), p1)
    emit_report(run_experiment(cfg), p2)
    assert len(p1.read_text().splitlines()) == 2
    assert p1.read_bytes() == p2.read_bytes()
    j1, j2 = tmp_path / "a.json", tmp_path / "b.json"
    emit_report(run_experiment(cfg), j1, "json")
    emit_report(run_experiment(cfg), j2, "json")
    assert j1.read_bytes() == j2.read_bytes()
    assert json.loads(j1.read_text())["rows"][0]["ratio"] == 1.0


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        emit_report(Report({}, [], {}), tmp_path / "no" / "dir" / "r.csv")


def test_summary_fit():
    rows = []
    for n, ratio in ((16, 4.0), (64, 6.0)):
        row = {c: "" for c in COLUMNS}
        row.update(graph=f"cycle:{n}", n=n, ratio=ratio, stretch_mean=2.0, degenerate=False, dominance=True)
        rows.append(row)
    s = summarize(rows)
    assert s["ratio_max"] == 6.0 and s["envelope_c"] == 1.0
    assert s["fitted_c"] == pytest.approx((4 * 4 + 6 * 6) / (16 + 36))
