"""Experiment grid: train on trace zero, calibrate, attest benign and attack traces.

Every repetition regenerates the workload from its own seed, so repetitions
are independent and can run in any order or in parallel. Reports carry raw
confusion counts, which add up across repetitions; rates are derived on
demand.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .attacks import AttackSpec, gen_dop, gen_rop
from .attest import calibrate, directed_hausdorff, embed, threshold
from .errors import CfaError, NoDopSpliceError
from .graph import FEATURE_NAMES, build_graph
from .gnn.train import TrainConfig, train
from .workload import WorkloadSpec, gen_workload

log = logging.getLogger(__name__)

ROP_LENGTHS = (5, 10, 15, 30, 40, 50, 75, 100, 150, 200, 250, 350, 500)
DOP_INSERTS = 50
CSV_COLUMNS = ("experiment", "attack", "config", "rep", "seed", "n_val", "tp", "fp", "tn", "fn",
               "fpr", "precision", "recall", "f1", "threshold", "mean_benign_distance",
               "mean_attack_distance", "skipped")


def _ratio(num, den) -> float:
    return num / den if den else 0.0


@dataclass
class MetricsReport:
    """Confusion counts with derived rates. Malicious is the positive class."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    reps: int = 0
    per_length: dict = field(default_factory=dict)

    @property
    def fpr(self) -> float:
        return _ratio(self.fp, self.fp + self.tn)

    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def f1(self) -> float:
        pr, re = self.precision, self.recall
        return 2 * pr * re / (pr + re) if pr + re > 0 else 0.0

    def __add__(self, other: "MetricsReport") -> "MetricsReport":
        lengths = dict(self.per_length)
        for k, v in other.per_length.items():
            a = lengths.get(k, {"detected": 0, "total": 0})
            lengths[k] = {"detected": a["detected"] + v["detected"], "total": a["total"] + v["total"]}
        return MetricsReport(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn,
                             self.fn + other.fn, self.reps + other.reps, lengths)

    def to_dict(self) -> dict:
        out = {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn, "reps": self.reps,
               "fpr": self.fpr, "precision": self.precision, "recall": self.recall, "f1": self.f1}
        out["per_length"] = {str(k): dict(v, recall=_ratio(v["detected"], v["total"]))
                             for k, v in sorted(self.per_length.items())}
        return out


def confusion(benign_distances, attack_distances, t: float) -> MetricsReport:
    b = np.asarray(benign_distances, dtype=np.float64)
    a = np.asarray(attack_distances, dtype=np.float64)
    fp = int(np.count_nonzero(b > t))
    tp = int(np.count_nonzero(a > t))
    return MetricsReport(tp=tp, fp=fp, tn=len(b) - fp, fn=len(a) - tp)


@dataclass(frozen=True)
class HarnessConfig:
    """Layout of one repetition's trace pool and the attack settings.

    Trace 0 trains, the next ``n_val`` calibrate, the next ``n_benign`` are
    attested as benign and the rest serve as attack bases (reused cyclically).
    """

    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    n_val: int = 10
    n_benign: int = 50
    n_attack_bases: int = 50
    constant_feature: bool = False
    zero_features: tuple = ()
    dop_retry_budget: int = 1000

    def __post_init__(self):
        if self.n_val < 1 or self.n_benign < 0 or self.n_attack_bases < 1:
            raise CfaError("need n_val >= 1, n_benign >= 0 and n_attack_bases >= 1")
        unknown = set(self.zero_features) - set(FEATURE_NAMES)
        if unknown:
            raise CfaError(f"unknown feature names {sorted(unknown)}")

    @property
    def n_traces(self) -> int:
        return 1 + self.n_val + self.n_benign + self.n_attack_bases


def rep_seed(seed: int, rep: int) -> int:
    return int(np.random.SeedSequence([seed, rep]).generate_state(1)[0])


class Rep:
    """One trained and calibrated repetition; attacks are attested against it."""

    def __init__(self, hc: HarnessConfig, seed: int):
        self.hc = hc
        self.seed = seed
        spec = replace(hc.workload, seed=seed, n_traces=hc.n_traces)
        self.traces = gen_workload(spec)
        graphs = [self.graph(t) for t in self.traces[: 1 + hc.n_val + hc.n_benign]]
        self.model = train(graphs[0], replace(hc.train, seed=seed)).model
        val = graphs[1: 1 + hc.n_val]
        self.profile = calibrate(self.model, graphs[0], val)
        self.ref = self.profile.reference_embeddings
        self.benign = [self.distance(g) for g in graphs[1 + hc.n_val:]]
        self.bases = self.traces[1 + hc.n_val + hc.n_benign:]

    def graph(self, trace):
        g = build_graph(trace, constant_feature=self.hc.constant_feature)
        if self.hc.zero_features:
            cols = [FEATURE_NAMES.index(name) for name in self.hc.zero_features]
            g.features[:, cols] = 0.0
        return g

    def distance(self, graph) -> float:
        return directed_hausdorff(embed(self.model, graph), self.ref)

    def attack_distances(self, kind: str, inserts: int, count: int, repeats: int = 0) -> tuple:
        """Distances of ``count`` attacks plus the number of DOP bases with no valid splice."""
        out, skipped = [], 0
        for i in range(count):
            base = self.bases[i % len(self.bases)]
            spec = AttackSpec(kind, inserts, repeats=repeats, seed=self.seed + i)
            try:
                trace = gen_rop(base, spec) if kind == "rop" else \
                    gen_dop(base, spec, self.hc.dop_retry_budget)
            except NoDopSpliceError:
                skipped += 1
                continue
            out.append(self.distance(self.graph(trace)))
        return out, skipped

    def row(self, experiment, attack, config, rep, attack_d, t=None, n_val=None, skipped=0) -> dict:
        t = self.profile.threshold if t is None else t
        m = confusion(self.benign, attack_d, t)
        return {"experiment": experiment, "attack": attack, "config": config, "rep": rep,
                "seed": self.seed, "n_val": n_val or self.hc.n_val, "tp": m.tp, "fp": m.fp,
                "tn": m.tn, "fn": m.fn, "fpr": m.fpr, "precision": m.precision,
                "recall": m.recall, "f1": m.f1, "threshold": t,
                "mean_benign_distance": float(np.mean(self.benign)) if self.benign else 0.0,
                "mean_attack_distance": float(np.mean(attack_d)) if attack_d else 0.0,
                "skipped": skipped}


def _map(fn, args, n_jobs):
    if n_jobs == 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, *zip(*args)))


def _rop_rep(hc, seed, rep, lengths, per_length):
    r = Rep(hc, rep_seed(seed, rep))
    rows = []
    for length in lengths:
        d, _ = r.attack_distances("rop", length, per_length)
        rows.append(r.row("rop_grid", "rop", length, rep, d))
    return rows


def _dop_rep(hc, seed, rep, n_attacks, inserts, repeats):
    r = Rep(hc, rep_seed(seed, rep))
    d, skipped = r.attack_distances("dop", inserts, n_attacks, repeats)
    return [r.row("dop_grid", "dop", inserts * (1 + repeats), rep, d, skipped=skipped)]


def _ablation_rep(hc, seed, rep, n_values, rop_length, n_attacks):
    r = Rep(hc, rep_seed(seed, rep))
    d, _ = r.attack_distances("rop", rop_length, n_attacks)
    cal = r.profile.calibration
    return [r.row("threshold_ablation", "rop", n, rep, d, t=threshold(cal[:n]), n_val=n)
            for n in n_values]


def _growth_rep(hc, seed, rep, lengths, per_length):
    r = Rep(hc, rep_seed(seed, rep))
    return [r.row("distance_growth", "rop", length, rep, r.attack_distances("rop", length, per_length)[0])
            for length in lengths]


def aggregate(rows) -> list:
    """One ``rep="all"`` row per (experiment, attack, config): summed counts, mean distances."""
    groups = {}
    for row in rows:
        groups.setdefault((row["experiment"], row["attack"], row["config"]), []).append(row)
    out = []
    for (experiment, attack, config), rs in groups.items():
        m = report_from_rows(rs)
        out.append({"experiment": experiment, "attack": attack, "config": config, "rep": "all",
                    "seed": "", "n_val": rs[0]["n_val"], "tp": m.tp, "fp": m.fp, "tn": m.tn,
                    "fn": m.fn, "fpr": m.fpr, "precision": m.precision, "recall": m.recall,
                    "f1": m.f1, "threshold": float(np.mean([r["threshold"] for r in rs])),
                    "mean_benign_distance": float(np.mean([r["mean_benign_distance"] for r in rs])),
                    "mean_attack_distance": float(np.mean([r["mean_attack_distance"] for r in rs])),
                    "skipped": sum(r["skipped"] for r in rs)})
    return out


def report_from_rows(rows) -> MetricsReport:
    """Sum per-row counts. Benign counts are shared by all configs of a rep, so they
    are taken once per rep."""
    total = MetricsReport()
    seen = set()
    for row in rows:
        first = row["rep"] not in seen
        seen.add(row["rep"])
        total = total + MetricsReport(
            tp=row["tp"], fn=row["fn"], fp=row["fp"] if first else 0,
            tn=row["tn"] if first else 0, reps=int(first),
            per_length={row["config"]: {"detected": row["tp"], "total": row["tp"] + row["fn"]}})
    return total


@dataclass
class GridResult:
    report: MetricsReport
    rows: list

    def all_rows(self) -> list:
        return self.rows + aggregate(self.rows)


def run_rop_grid(hc: HarnessConfig, lengths=ROP_LENGTHS, per_length: int = 50, reps: int = 1,
                 seed: int = 0, n_jobs: int = 1) -> GridResult:
    rows = sum(_map(_rop_rep, [(hc, seed, r, tuple(lengths), per_length) for r in range(reps)],
                    n_jobs), [])
    return GridResult(report_from_rows(rows), rows)


def dop_shape(total_inserted: int = 2000, inserts: int = DOP_INSERTS) -> tuple:
    """``(inserts, repeats)`` whose product ``inserts * (1 + repeats)`` is closest to the total."""
    inserts = min(inserts, total_inserted)
    return inserts, max(0, int(round(total_inserted / inserts)) - 1)


def run_dop_grid(hc: HarnessConfig, n_attacks: int = 50, total_inserted: int = 2000,
                 reps: int = 1, seed: int = 0, n_jobs: int = 1,
                 inserts: int = DOP_INSERTS) -> GridResult:
    inserts, repeats = dop_shape(total_inserted, inserts)
    rows = sum(_map(_dop_rep, [(hc, seed, r, n_attacks, inserts, repeats) for r in range(reps)],
                    n_jobs), [])
    return GridResult(report_from_rows(rows), rows)


def run_threshold_ablation(hc: HarnessConfig, n_values=(2, 5, 10), reps: int = 1, seed: int = 0,
                           rop_length: int = 100, n_attacks: int = 50,
                           n_jobs: int = 1) -> GridResult:
    """Per-n rates with the threshold taken from the first ``n`` validation distances."""
    if max(n_values) > hc.n_val:
        raise CfaError(f"n={max(n_values)} exceeds the {hc.n_val} validation traces")
    rows = sum(_map(_ablation_rep, [(hc, seed, r, tuple(n_values), rop_length, n_attacks)
                                    for r in range(reps)], n_jobs), [])
    return GridResult(report_from_rows(rows), rows)


def ablation_table(rows) -> list:
    """Mean FPR/precision/recall/F1 over reps for each n."""
    out = []
    for n in sorted({r["config"] for r in rows}):
        rs = [r for r in rows if r["config"] == n and r["rep"] != "all"]
        out.append({"n": n, **{k: float(np.mean([r[k] for r in rs]))
                               for k in ("fpr", "precision", "recall", "f1")}, "reps": len(rs)})
    return out


def run_distance_growth(hc: HarnessConfig, lengths=(5, 50, 500), per_length: int = 10,
                        reps: int = 1, seed: int = 0, n_jobs: int = 1) -> GridResult:
    """Mean attestation distance of ROP traces per insert length, per rep."""
    rows = sum(_map(_growth_rep, [(hc, seed, r, tuple(lengths), per_length) for r in range(reps)],
                    n_jobs), [])
    return GridResult(report_from_rows(rows), rows)


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in CSV_COLUMNS})


def write_json(result: GridResult, path, extra=None):
    doc = {"report": result.report.to_dict(), "rows": result.all_rows()}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def harness_dict(hc: HarnessConfig) -> dict:
    return asdict(hc)
