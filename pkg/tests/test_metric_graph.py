import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arrowq.metric_graph import (
    DisconnectedGraphError,
    GraphParseError,
    MetricSpace,
    WeightBelowOneError,
    WeightedGraph,
    apsp_metric,
    cycle_graph,
    graph_from_spec,
    grid_graph,
    parse_graph,
    path_graph,
    random_geometric_graph,
    validate_metric,
)


def test_parse_and_apsp_small_graph():
    g = parse_graph("3 3\n0 1 1\n1 2 2  # comment\n0 2 5\n")
    m = apsp_metric(g)
    assert m.dist.tolist() == [[0, 1, 3], [1, 0, 2], [3, 2, 0]]
    assert m.diameter() == 3.0
    assert validate_metric(m) == []


def test_text_roundtrip():
    g = grid_graph(2, 3)
    assert parse_graph(g.to_text()) == g


@pytest.mark.parametrize("text", ["", "2\n", "2 1\n0 1\n", "2 2\n0 1 1\n", "x y\n"])
def test_parse_errors(text):
    with pytest.raises(GraphParseError):
        parse_graph(text)


def test_disconnected_and_light_edges_rejected():
    with pytest.raises(DisconnectedGraphError):
        WeightedGraph(3, ((0, 1, 1.0),))
    with pytest.raises(WeightBelowOneError):
        WeightedGraph(2, ((0, 1, 0.5),))


def test_parallel_edges_keep_lightest():
    m = apsp_metric(WeightedGraph(2, ((0, 1, 4.0), (0, 1, 2.0))))
    assert m.distance(0, 1) == 2.0


def test_cycle_distances():
    m = apsp_metric(cycle_graph(8))
    assert m.distance(0, 4) == 4.0
    assert m.distance(1, 7) == 2.0


def test_validate_metric_flags_each_kind():
    d = np.array([[0.0, 1.0, 5.0], [2.0, 0.0, 1.0], [5.0, 1.0, 0.5]])
    kinds = {item["kind"] for item in validate_metric(MetricSpace(d))}
    assert {"identity", "symmetry", "triangle"} <= kinds
    kinds = {item["kind"] for item in validate_metric(MetricSpace(np.array([[0, 0.5], [0.5, 0]])))}
    assert kinds == {"min-distance"}


def test_graph_specs():
    assert graph_from_spec("cycle:16").node_count == 16
    assert graph_from_spec("grid:4x4").node_count == 16
    assert graph_from_spec("path:8").node_count == 8
    assert graph_from_spec("complete:5").node_count == 5
    assert graph_from_spec("geometric:20:0.3:7").node_count == 20


def test_graph_spec_reads_file(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text(path_graph(4).to_text())
    assert graph_from_spec(str(p)) == path_graph(4)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.floats(0.05, 0.6), st.integers(0, 10**6))
def test_geometric_graphs_are_normalized_metrics(n, radius, seed):
    m = apsp_metric(random_geometric_graph(n, radius, seed))
    assert validate_metric(m) == []
    assert m.min_distance() >= 1.0 - 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6))
def test_grid_distance_is_manhattan(rows, cols):
    m = apsp_metric(grid_graph(rows, cols))
    for u in range(rows * cols):
        for v in range(rows * cols):
            want = abs(u // cols - v // cols) + abs(u % cols - v % cols)
            assert m.distance(u, v) == want
