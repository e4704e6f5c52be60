"""Training loop: one benign graph, Adam, step-decayed lr, early stopping on (AP+AUC)/2."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, TrainingDivergedError
from .metrics import ap_auc
from .model import (DROPOUT_P, GraphTensors, Noise, VgaeModel, _edge_scores, forward,
                    loss_and_grads)
from .optim import AdamState, StepDecay, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 3000
    patience: int = 500
    lr0: float = 0.01
    lr_decay_factor: float = 3.0
    lr_decay_every: int = 150
    lr_fixed_after: int = 750
    seed: int = 0
    negative_sampling_ratio: float = 1.0
    dropout_p: float = DROPOUT_P
    # weight of the per-node KL term in the objective; None means 1/n_nodes
    kl_weight: float | None = None

    def __post_init__(self):
        for name in ("max_epochs", "patience", "lr0", "lr_decay_factor", "lr_decay_every",
                     "lr_fixed_after", "negative_sampling_ratio"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.patience > self.max_epochs:
            raise ConfigError("patience cannot exceed max_epochs")
        if not 0 <= self.dropout_p < 1:
            raise ConfigError("dropout_p must lie in [0, 1)")
        if self.kl_weight is not None and not self.kl_weight >= 0:
            raise ConfigError("kl_weight must be >= 0")

    @property
    def schedule(self) -> StepDecay:
        return StepDecay(self.lr0, self.lr_decay_factor, self.lr_decay_every, self.lr_fixed_after)


class EarlyStopping:
    """Tracks the best monitor value; signals a stop ``patience`` epochs after it."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = -1

    def update(self, epoch: int, value: float) -> bool:
        if value > self.best:
            self.best, self.best_epoch = value, epoch
            return True
        return False

    def should_stop(self, epoch: int) -> bool:
        return epoch - self.best_epoch >= self.patience


@dataclass
class TrainResult:
    model: VgaeModel
    history: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0

    @property
    def best(self) -> dict:
        return self.history[self.best_epoch]


def _sym_keys(edges, n):
    src, dst = edges
    return np.unique(np.concatenate([src * n + dst, dst * n + src]))


def sample_negatives(n: int, sym_keys: np.ndarray, count: int,
                     rng: np.random.Generator) -> np.ndarray:
    """``count`` directed pairs (u != v) that are not edges in either direction.

    Draws with replacement; returns fewer (possibly zero) only when no such
    pair exists.
    """
    offdiag = int(np.count_nonzero(sym_keys // n != sym_keys % n))
    available = n * (n - 1) - offdiag
    if count <= 0 or available <= 0:
        return np.zeros((2, 0), dtype=np.int64)
    if available < 0.25 * n * n:
        keys = np.setdiff1d(np.arange(n * n), sym_keys)
        keys = keys[keys // n != keys % n]
        pick = keys[rng.integers(0, len(keys), count)]
        return np.vstack([pick // n, pick % n])
    out = []
    got = 0
    while got < count:
        draw = rng.integers(0, n * n, 2 * (count - got) + 8)
        ok = draw // n != draw % n
        pos = np.searchsorted(sym_keys, draw)
        hit = pos < len(sym_keys)
        hit[hit] = sym_keys[pos[hit]] == draw[hit]
        draw = draw[ok & ~hit][: count - got]
        out.append(draw)
        got += len(draw)
    keys = np.concatenate(out)
    return np.vstack([keys // n, keys % n])


def monitor_scores(model: VgaeModel, t: GraphTensors, pos, neg) -> dict:
    """AP/AUC of the inference-mode decoder on positive edges vs. ``neg``."""
    z = forward(model, t, None)[0].z
    scores = np.concatenate([_edge_scores(z, pos), _edge_scores(z, neg)])
    labels = np.r_[np.ones(pos.shape[1]), np.zeros(neg.shape[1])]
    return ap_auc(scores, labels)


def history_digest(history) -> str:
    h = hashlib.sha256()
    for row in history:
        h.update(repr(tuple(row.values())).encode())
    return h.hexdigest()


def train(graph, cfg: TrainConfig | None = None, model: VgaeModel | None = None) -> TrainResult:
    """Fit a VGAE to one execution graph and return the best-monitor snapshot."""
    cfg = cfg or TrainConfig()
    ss = np.random.SeedSequence(cfg.seed)
    init_seed, noise_ss, neg_ss, mon_ss = ss.spawn(4)
    if model is None:
        model = VgaeModel.init(graph.feature_dim,
                               seed=int(init_seed.generate_state(1)[0]),
                               dropout_p=cfg.dropout_p)
    model.seed = cfg.seed
    noise_rng = np.random.default_rng(noise_ss)
    neg_rng = np.random.default_rng(neg_ss)

    t = GraphTensors.from_graph(graph)
    n = t.n
    pos = np.asarray(graph.edges, dtype=np.int64).reshape(2, -1)
    sym = _sym_keys(pos, n)
    kl_weight = 1.0 / n if cfg.kl_weight is None else cfg.kl_weight
    n_neg = int(round(cfg.negative_sampling_ratio * pos.shape[1]))
    mon_neg = sample_negatives(n, sym, n_neg, np.random.default_rng(mon_ss))
    can_monitor = pos.shape[1] > 0 and mon_neg.shape[1] > 0

    schedule = cfg.schedule
    state = AdamState.zeros_like(model.params())
    stopper = EarlyStopping(cfg.patience)
    best = model.copy()
    history = []
    epoch = 0
    for epoch in range(cfg.max_epochs):
        lr = schedule(epoch)
        neg = sample_negatives(n, sym, n_neg, neg_rng)
        noise = Noise.draw(noise_rng, n, model)
        terms, grads = loss_and_grads(model, t, pos, neg, noise, kl_weight)
        loss = terms["loss"]
        if not np.isfinite(loss):
            raise TrainingDivergedError(epoch, loss)
        adam_step(model.params(), grads, state, lr)

        if can_monitor:
            m = monitor_scores(model, t, pos, mon_neg)
            value = 0.5 * (m["ap"] + m["auc"])
        else:
            m = {"ap": float("nan"), "auc": float("nan")}
            value = -loss
        history.append({"epoch": epoch, "loss": loss, "ap": m["ap"], "auc": m["auc"], "lr": lr})
        if stopper.update(epoch, value):
            best = model.copy()
        elif stopper.should_stop(epoch):
            log.debug("early stop at epoch %d (best %d)", epoch, stopper.best_epoch)
            break

    best.seed = cfg.seed
    best.history_digest = history_digest(history)
    log.info("trained %d epochs, best epoch %d (ap=%.4f auc=%.4f)", epoch + 1,
             stopper.best_epoch, history[stopper.best_epoch]["ap"],
             history[stopper.best_epoch]["auc"])
    return TrainResult(best, history, stopper.best_epoch, epoch)


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
