"""Ranking metrics used to monitor link reconstruction."""

import numpy as np

from ..errors import MetricUndefinedError


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # tie groups share the mean of their 1-based ranks
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(xs)]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(len(x))
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def ap_auc(scores, labels=None) -> dict:
    """Average precision and ROC AUC.

    Accepts either parallel ``scores``/``labels`` arrays or a single sequence of
    ``(score, label)`` pairs. AUC is the Mann-Whitney statistic with averaged
    ranks for ties; AP sums precision at each distinct threshold weighted by the
    recall gained there.
    """
    if labels is None:
        arr = np.asarray(scores, dtype=np.float64).reshape(-1, 2)
        scores, labels = arr[:, 0], arr[:, 1]
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("ap/auc need both positive and negative labels")

    ranks = _average_ranks(s)
    auc = (ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    order = np.argsort(-s, kind="mergesort")
    ss, ys = s[order], y[order]
    last = np.r_[ss[1:] != ss[:-1], True]
    tp = np.cumsum(ys)[last]
    fp = np.cumsum(~ys)[last]
    precision = tp / (tp + fp)
    recall_gain = np.diff(np.r_[0, tp]) / n_pos
    ap = float(np.sum(recall_gain * precision))
    return {"ap": ap, "auc": float(auc)}
