"""Report figures. Uses the non-interactive Agg backend and only writes files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(path, dpi=120, metadata={"Software": None} if str(path).endswith(".png") else None)
    plt.close(fig)


def plot_detection_by_config(rows, path, xlabel="ROP insert length"):
    """Recall and mean attack distance per config, aggregated over reps."""
    configs = sorted({r["config"] for r in rows if r["rep"] != "all"})
    recall, dist, ben = [], [], []
    for c in configs:
        rs = [r for r in rows if r["config"] == c and r["rep"] != "all"]
        tp, fn = sum(r["tp"] for r in rs), sum(r["fn"] for r in rs)
        recall.append(tp / (tp + fn) if tp + fn else 0.0)
        dist.append(np.mean([r["mean_attack_distance"] for r in rs]))
        ben.append(np.mean([r["mean_benign_distance"] for r in rs]))
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    x = np.arange(len(configs))
    a1.plot(x, recall, "o-")
    a1.set_ylim(-0.02, 1.02)
    a1.set_ylabel("recall")
    a2.plot(x, dist, "o-", label="attack")
    a2.plot(x, ben, "s--", label="benign")
    a2.set_ylabel("mean distance")
    a2.legend(frameon=False)
    for ax in (a1, a2):
        ax.set_xticks(x)
        ax.set_xticklabels([str(c) for c in configs], rotation=45)
        ax.set_xlabel(xlabel)
    _save(fig, path)


def plot_ablation(table, path):
    """Mean FPR and F1 against the number of validation traces."""
    n = [r["n"] for r in table]
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.plot(n, [r["fpr"] for r in table], "o-", label="FPR")
    ax.plot(n, [r["f1"] for r in table], "s--", label="F1")
    ax.set_xlabel("validation traces for the threshold")
    ax.set_xticks(n)
    ax.set_ylim(-0.02, 1.02)
    ax.legend(frameon=False)
    _save(fig, path)


def plot_distances(benign, attack, t, path, attack_label="attack"):
    """Per-trace distances with the attestation threshold."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(np.arange(len(benign)), benign, "o", ms=3, label="benign")
    ax.plot(len(benign) + np.arange(len(attack)), attack, "x", ms=4, label=attack_label)
    ax.axhline(t, color="k", lw=1, ls=":", label="threshold")
    ax.set_xlabel("trace")
    ax.set_ylabel("directed Hausdorff distance")
    ax.legend(frameon=False)
    _save(fig, path)
