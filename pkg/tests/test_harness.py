import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfattest import harness
from cfattest.errors import CfaError
from cfattest.gnn import TrainConfig
from cfattest.harness import (CSV_COLUMNS, HarnessConfig, MetricsReport, confusion, dop_shape,
                              report_from_rows)
from cfattest.workload import WorkloadSpec

counts = st.builds(MetricsReport, tp=st.integers(0, 50), fp=st.integers(0, 50),
                   tn=st.integers(0, 50), fn=st.integers(0, 50), reps=st.integers(0, 3))


def test_formula():
    m = MetricsReport(tp=9, fn=1, fp=1, tn=9)
    assert m.precision == pytest.approx(0.9)
    assert m.recall == pytest.approx(0.9)
    assert m.f1 == pytest.approx(0.9)
    assert m.fpr == pytest.approx(0.1)


def test_perfect_separation():
    m = confusion([0.1, 0.2], [0.5, 0.9], 0.3)
    assert (m.fpr, m.f1, m.recall) == (0.0, 1.0, 1.0)


def test_undefined_rates_are_zero():
    m = MetricsReport()
    assert (m.fpr, m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0, 0.0)


@given(counts)
def test_identities(m):
    if m.fp + m.tn:
        assert m.fpr == m.fp / (m.fp + m.tn)
    if m.precision + m.recall:
        assert m.f1 == pytest.approx(2 * m.precision * m.recall / (m.precision + m.recall))
    for v in (m.fpr, m.precision, m.recall, m.f1):
        assert 0.0 <= v <= 1.0


@given(counts, counts, counts)
def test_aggregation_is_associative(a, b, c):
    assert ((a + b) + c).to_dict() == (a + (b + c)).to_dict()


def test_dop_shape():
    assert dop_shape(2000, 50) == (50, 39)
    assert dop_shape(30, 50) == (30, 0)


def test_report_counts_benign_once_per_rep():
    rows = [{"rep": 0, "config": c, "tp": 3, "fn": 2, "fp": 1, "tn": 9} for c in (5, 10)]
    m = report_from_rows(rows)
    assert (m.tp, m.fn, m.fp, m.tn, m.reps) == (6, 4, 1, 9, 1)


def test_config_checks():
    with pytest.raises(CfaError):
        HarnessConfig(zero_features=("nope",))
    with pytest.raises(CfaError):
        HarnessConfig(n_val=0)


@pytest.fixture(scope="module")
def small():
    return HarnessConfig(WorkloadSpec(), TrainConfig(max_epochs=300, patience=300),
                         n_val=10, n_benign=10, n_attack_bases=10)


def test_rop_grid_rows(small, tmp_path):
    res = harness.run_rop_grid(small, (5, 500), per_length=5, reps=2, seed=3)
    assert len(res.rows) == 4
    assert res.report.reps == 2
    assert res.report.tp + res.report.fn == 20
    assert res.report.fp + res.report.tn == 20
    rows = res.all_rows()
    assert [r["rep"] for r in rows[-2:]] == ["all", "all"]
    harness.write_csv(rows, tmp_path / "r.csv")
    with open(tmp_path / "r.csv") as fh:
        got = list(csv.reader(fh))
    assert got[0] == list(CSV_COLUMNS)
    assert len(got) == 7
    harness.write_json(res, tmp_path / "r.json", {"note": 1})
    assert json.loads((tmp_path / "r.json").read_text())["report"]["reps"] == 2


def test_parallel_matches_serial(small):
    a = harness.run_dop_grid(small, n_attacks=3, reps=2, seed=4)
    b = harness.run_dop_grid(small, n_attacks=3, reps=2, seed=4, n_jobs=2)
    assert a.rows == b.rows
    assert a.rows[0]["config"] == 2000


def test_threshold_ablation_table(small):
    res = harness.run_threshold_ablation(small, (2, 5, 10), reps=1, seed=5, n_attacks=5)
    table = harness.ablation_table(res.all_rows())
    assert [r["n"] for r in table] == [2, 5, 10]
    for r in table:
        assert all(np.isfinite(r[k]) for k in ("fpr", "precision", "recall", "f1"))
    with pytest.raises(CfaError):
        harness.run_threshold_ablation(small, (2, 20), reps=1)


def test_zeroing_visit_features_hurts_dop_recall():
    """Visit counts and frequency carry the DOP signal; DOP adds no new edges."""
    base = HarnessConfig(n_benign=20, n_attack_bases=20)
    ablated = HarnessConfig(n_benign=20, n_attack_bases=20,
                            zero_features=("visits", "visit_frequency"))
    full = harness.run_dop_grid(base, n_attacks=20, reps=3, seed=6).report.recall
    cut = harness.run_dop_grid(ablated, n_attacks=20, reps=3, seed=6).report.recall
    assert cut < full


def test_validation_traces_rarely_exceed_their_own_threshold():
    hc = HarnessConfig(n_benign=0, n_attack_bases=1)
    rates = []
    for rep in range(30):
        r = harness.Rep(hc, harness.rep_seed(99, rep))
        cal = np.array(r.profile.calibration)
        rates.append(np.mean(cal > r.profile.threshold))
    assert np.mean(rates) <= 0.05


def test_long_rop_is_flagged():
    hc = HarnessConfig(n_benign=0, n_attack_bases=1)
    flagged = []
    for rep in range(20):
        r = harness.Rep(hc, harness.rep_seed(31, rep))
        d, _ = r.attack_distances("rop", 500, 1)
        flagged.append(d[0] > r.profile.threshold)
    assert np.mean(flagged) >= 0.95
