import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfattest.errors import EmptyTraceError, ParseError
from cfattest.graph import (FEATURE_NAMES, N_FEATURES, build_graph, edge_pairs, graph_from_bytes,
                            graph_from_json, graph_to_bytes, graph_to_json, load_graph,
                            save_graph)
from cfattest.trace_io import Trace
from cfattest.workload import WorkloadSpec, gen_workload
from oracles import naive_features

A, B, C = 0xA, 0xB, 0xC
col = {name: i for i, name in enumerate(FEATURE_NAMES)}


def check_against_oracle(steps, tol=1e-12):
    g = build_graph(Trace(steps))
    nodes, edges, X = naive_features(list(steps))
    assert g.node_ids.tolist() == nodes
    assert sorted(map(tuple, g.edges.T.tolist())) == edges
    np.testing.assert_allclose(g.features, X, rtol=0, atol=tol)


def test_small_graph():
    g = build_graph(Trace([A, B, A, C]))
    assert g.node_ids.tolist() == [A, B, C]
    assert g.edge_set() == {(A, B), (B, A), (A, C)}
    assert g.features[0, col["visits"]] * 4 == 2


def test_single_step():
    g = build_graph(Trace([A]))
    assert (g.n_nodes, g.n_edges) == (1, 0)
    f = g.features[0]
    assert f[col["first_visit"]] == f[col["last_visit"]] == 0
    assert f[col["time_of_use"]] == 0


def test_hand_computed_features():
    f = build_graph(Trace([A, B, A])).features[0] * 3
    assert f[col["visits"]] == 2
    assert f[col["first_visit"]] == 0
    assert f[col["last_visit"]] == 2
    assert f[col["time_of_use"]] == 2
    assert f[col["mean_visit_gap"]] == 2
    assert f[col["visit_std"]] == pytest.approx(1.0, abs=1e-15)


def test_repeated_single_node():
    g = build_graph(Trace([A] * 7))
    assert g.n_nodes == 1
    assert g.edge_set() == {(A, A)}
    assert g.features[0, col["visit_frequency"]] == 1.0


def test_constant_feature():
    g = build_graph(Trace([A, B]), constant_feature=True)
    assert g.feature_dim == N_FEATURES + 1
    assert np.all(g.features[:, -1] == 1.0)


def test_empty_trace():
    with pytest.raises(EmptyTraceError):
        build_graph(Trace([]))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=60))
def test_features_match_oracle_property(steps):
    check_against_oracle(steps)


def test_features_match_oracle_random_trace():
    rng = np.random.default_rng(1)
    check_against_oracle(rng.integers(0, 40, 2000).tolist())


def test_features_match_oracle_workload_trace():
    t = gen_workload(WorkloadSpec(n_blocks=60, trace_len=3000, n_traces=1, seed=4))[0]
    check_against_oracle(t.steps.tolist())


def test_features_match_oracle_long_trace():
    # the naive oracle is quadratic in nodes x steps, so keep the alphabet small
    rng = np.random.default_rng(2)
    check_against_oracle(rng.integers(0, 12, 10**5).tolist())


def test_edges_match_pair_set():
    rng = np.random.default_rng(3)
    steps = rng.integers(0, 30, 500).astype(np.uint64)
    assert build_graph(Trace(steps)).edge_set() == edge_pairs(steps)


def test_permuted():
    g = build_graph(Trace([A, B, C, A]))
    p = g.permuted([2, 0, 1])
    assert p.edge_set() == g.edge_set()
    np.testing.assert_array_equal(p.features, g.features[[2, 0, 1]])


@pytest.mark.parametrize("suffix", [".json", ".bin"])
def test_serialization_round_trip(tmp_path, suffix):
    g = build_graph(Trace(np.random.default_rng(5).integers(0, 50, 400)), constant_feature=True)
    save_graph(tmp_path / f"g{suffix}", g)
    assert load_graph(tmp_path / f"g{suffix}") == g
    assert graph_from_json(graph_to_json(g)) == g
    assert graph_from_bytes(graph_to_bytes(g)) == g


def test_bad_graph_files():
    data = graph_to_bytes(build_graph(Trace([A, B])))
    with pytest.raises(ParseError):
        graph_from_bytes(data[:-1])
    with pytest.raises(ParseError):
        graph_from_bytes(data[:10])
    with pytest.raises(ParseError):
        graph_from_json('{"node_ids": [1], "edges": [[0], [3]], "features": [[0]], "trace_len": 1}')
    with pytest.raises(ParseError):
        graph_from_json("[]")


def test_build_time_is_linear():
    rng = np.random.default_rng(0)
    base = rng.integers(0, 2000, 2 * 10**5).astype(np.uint64)

    def median_time(steps):
        times = []
        for _ in range(10):
            t0 = time.perf_counter()
            build_graph(Trace(steps))
            times.append(time.perf_counter() - t0)
        return np.median(times)

    small, large = median_time(base[:10**5]), median_time(base)
    assert large / small <= 2.5
