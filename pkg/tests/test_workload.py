import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfattest.errors import SpecError
from cfattest.graph import FEATURE_NAMES, build_graph, edge_pairs
from cfattest.workload import WorkloadSpec, gen_workload, gen_workload_with_program


def test_two_block_program():
    t = gen_workload(WorkloadSpec(n_blocks=2, trace_len=5, n_traces=1))[0]
    assert len(t) == 5
    assert len(set(t.steps.tolist())) <= 2


@pytest.mark.parametrize("kw", [dict(n_blocks=1), dict(n_blocks=10, trace_len=5),
                                dict(branching=0.5), dict(n_traces=0), dict(input_entropy=-1),
                                dict(region_size=(1, 3)), dict(region_size=(6, 4)),
                                dict(far_jump_prob=2.0), dict(n_passes=0)])
def test_spec_validation(kw):
    with pytest.raises(SpecError):
        WorkloadSpec(**kw)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 80), st.floats(1.0, 3.0), st.floats(0.0, 0.5), st.integers(1, 3),
       st.integers(0, 10**6))
def test_traces_stay_on_program_edges(n_blocks, branching, far, passes, seed):
    spec = WorkloadSpec(n_blocks=n_blocks, branching=branching, trace_len=20 * n_blocks,
                        n_traces=3, far_jump_prob=far, n_passes=passes, seed=seed)
    prog, traces = gen_workload_with_program(spec)
    truth = prog.edge_set()
    for t in traces:
        assert len(t) == spec.trace_len
        assert edge_pairs(t.steps) <= truth


def test_every_block_is_visited_by_default():
    prog, traces = gen_workload_with_program(WorkloadSpec(n_traces=5, seed=3))
    for t in traces:
        assert len(np.unique(t.steps)) == prog.n_blocks


def test_seeded():
    spec = WorkloadSpec(n_traces=3, seed=5)
    assert gen_workload(spec) == gen_workload(spec)
    assert gen_workload(spec) != gen_workload(WorkloadSpec(n_traces=3, seed=6))


def test_entropy_changes_visit_counts():
    visits = FEATURE_NAMES.index("visits")
    a, b = gen_workload(WorkloadSpec(n_traces=2, input_entropy=0.05, seed=1))
    ga, gb = build_graph(a), build_graph(b)
    assert set(ga.node_ids.tolist()) == set(gb.node_ids.tolist())
    counts_a = dict(zip(ga.node_ids.tolist(), ga.features[:, visits]))
    counts_b = dict(zip(gb.node_ids.tolist(), gb.features[:, visits]))
    assert any(counts_a[k] != counts_b.get(k) for k in counts_a)


def test_zero_entropy_keeps_odds_fixed():
    # without jitter the runs still differ because branches are random draws
    a, b = gen_workload(WorkloadSpec(n_traces=2, input_entropy=0.0, seed=1))
    assert a != b
