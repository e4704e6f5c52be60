import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfattest.attacks import AttackSpec, find_dop_splice, gen_attack, gen_dop, gen_rop
from cfattest.errors import NoDopSpliceError, SpecError
from cfattest.graph import edge_pairs
from cfattest.trace_io import Trace
from cfattest.workload import WorkloadSpec, gen_workload

a, b, c, d = 1, 2, 3, 4


@pytest.fixture(scope="module")
def workload_trace():
    return gen_workload(WorkloadSpec(n_traces=1, seed=11))[0]


def test_rop_structure():
    out = gen_rop(Trace([a, b, c]), AttackSpec("rop", 2, pos=1, seed=3))
    s = out.steps.tolist()
    assert len(s) == 5
    assert s[0] == a and s[3:] == [b, c]
    assert set(s[1:3]) <= {a, b, c}


@pytest.mark.parametrize("kw", [dict(kind="rop", inserts=0), dict(kind="jop", inserts=1),
                                dict(kind="dop", inserts=2, repeats=-1),
                                dict(kind="rop", inserts=1, pos=-2)])
def test_spec_validation(kw):
    with pytest.raises(SpecError):
        AttackSpec(**kw)


def test_rop_bad_pos():
    with pytest.raises(SpecError):
        gen_rop(Trace([a]), AttackSpec("rop", 1, pos=2))


def test_rop_uniform_sampling():
    hits = total = 0
    for seed in range(10**4):
        s = gen_rop(Trace([a, b]), AttackSpec("rop", 1, pos=0, seed=seed)).steps
        hits += int(s[0] == a)
        total += 1
    assert abs(hits / total - 0.5) <= 0.02


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 9), min_size=1, max_size=50), st.integers(1, 30),
       st.integers(0, 2**31))
def test_rop_length_formula(steps, inserts, seed):
    t = Trace(steps)
    out = gen_rop(t, AttackSpec("rop", inserts, seed=seed))
    assert len(out) == len(t) + inserts
    assert set(out.steps.tolist()) <= set(steps)


def test_dop_hand_example():
    t = Trace([a, b, c, a, b, c, d])
    out = gen_dop(t, AttackSpec("dop", 3, pos=3, seed=0))
    assert out.steps.tolist() == [a, b, c, a, b, c, a, b, c, d]
    assert find_dop_splice(t, AttackSpec("dop", 3, pos=3))[1].tolist() == [a, b, c]
    assert edge_pairs(out.steps) == edge_pairs(t.steps)


def test_dop_repeats_length():
    t = Trace([a, b, c, a, b, c, d])
    out = gen_dop(t, AttackSpec("dop", 3, pos=3, repeats=1))
    assert len(out) == 13
    assert edge_pairs(out.steps) == edge_pairs(t.steps)


def test_dop_impossible():
    with pytest.raises(NoDopSpliceError):
        gen_dop(Trace([a, b]), AttackSpec("dop", 2), retry_budget=20)


def test_dop_bad_pos():
    with pytest.raises(SpecError):
        gen_dop(Trace([a, b, a]), AttackSpec("dop", 1, pos=0))


def test_dop_workload_length_and_edges(workload_trace):
    t = workload_trace
    ref = edge_pairs(t.steps)
    for seed in range(20):
        spec = AttackSpec("dop", 50, repeats=39, seed=seed)
        out = gen_attack(t, spec)
        assert len(out) == len(t) + 50 * 40
        assert edge_pairs(out.steps) == ref


def test_dop_never_adds_edges(workload_trace):
    """10,000 seeded generations with varied shapes, none may create an edge."""
    t = Trace(workload_trace.steps[:2000])
    ref = edge_pairs(t.steps)
    rng = np.random.default_rng(0)
    new_edges = 0
    for seed in range(10**4):
        inserts = int(rng.integers(1, 40))
        repeats = int(rng.integers(0, 4))
        out = gen_dop(t, AttackSpec("dop", inserts, repeats=repeats, seed=seed))
        assert len(out) == len(t) + inserts * (1 + repeats)
        new_edges += int(not edge_pairs(out.steps) <= ref)
    assert new_edges == 0


def test_generation_is_seeded(workload_trace):
    for kind in ("rop", "dop"):
        spec = AttackSpec(kind, 20, seed=5)
        assert gen_attack(workload_trace, spec) == gen_attack(workload_trace, spec)
