"""Variational graph autoencoder with hand-written forward and backward passes.

Encoder: three ReLU graph convolutions (F -> 32 -> 64 -> 48) with dropout
after the first two, followed by two linear graph convolutions producing the
posterior mean and log-variance (48 -> 24 each). The decoder is the inner
product ``sigmoid(z_u . z_v)``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..errors import ModelError
from .sparse import as_operator, normalize_adjacency

HIDDEN = (32, 64, 48)
LATENT = 24
LAYER_NAMES = ("enc1", "enc2", "enc3", "mu", "logvar")
DROPOUT_P = 0.3
PROB_EPS = 1e-15
FORMAT_VERSION = 1


def layer_shapes(feature_dim: int, hidden=HIDDEN, latent: int = LATENT):
    h1, h2, h3 = hidden
    return [(feature_dim, h1), (h1, h2), (h2, h3), (h3, latent), (h3, latent)]


def count_parameters(feature_dim: int = 15, hidden=HIDDEN, latent: int = LATENT) -> int:
    """Weights plus biases of all five convolutions."""
    return sum(i * o + o for i, o in layer_shapes(feature_dim, hidden, latent))


@dataclass
class VgaeModel:
    weights: list
    biases: list
    dropout_p: float = DROPOUT_P
    seed: int = 0
    history_digest: str = ""

    @classmethod
    def init(cls, feature_dim: int, seed: int = 0, dropout_p: float = DROPOUT_P,
             hidden=HIDDEN, latent: int = LATENT) -> "VgaeModel":
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for i, o in layer_shapes(feature_dim, hidden, latent):
            bound = np.sqrt(6.0 / (i + o))
            weights.append(rng.uniform(-bound, bound, size=(i, o)))
            biases.append(np.zeros(o))
        return cls(weights, biases, dropout_p, seed)

    @property
    def feature_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def latent_dim(self) -> int:
        return self.weights[3].shape[1]

    @property
    def layer_dims(self) -> list:
        return [self.feature_dim] + [w.shape[1] for w in self.weights[:3]] + [self.latent_dim]

    def n_parameters(self) -> int:
        return int(sum(w.size + b.size for w, b in zip(self.weights, self.biases)))

    def params(self) -> list:
        return self.weights + self.biases

    def copy(self) -> "VgaeModel":
        return VgaeModel([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                         self.dropout_p, self.seed, self.history_digest)

    def validate(self):
        if len(self.weights) != 5 or len(self.biases) != 5:
            raise ModelError("expected five layers")
        (f, h1), (a, h2), (b, h3), (c, l1), (d, l2) = (w.shape for w in self.weights)
        if a != h1 or b != h2 or c != h3 or d != h3 or l1 != l2:
            raise ModelError(f"inconsistent layer chain {[w.shape for w in self.weights]}")
        for w, bias in zip(self.weights, self.biases):
            if bias.shape != (w.shape[1],):
                raise ModelError(f"bias shape {bias.shape} does not match weight {w.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(bias))):
                raise ModelError("non-finite parameter")
        if self.n_parameters() != count_parameters(f, (h1, h2, h3), l1):
            raise ModelError("parameter count mismatch")

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "feature_dim": self.feature_dim,
            "layer_dims": self.layer_dims,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "dropout_p": self.dropout_p,
            "seed": self.seed,
            "training_history_digest": self.history_digest,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @classmethod
    def from_dict(cls, raw: dict) -> "VgaeModel":
        try:
            if raw["format_version"] != FORMAT_VERSION:
                raise ModelError(f"unsupported model format {raw['format_version']}")
            model = cls([np.array(w, dtype=np.float64) for w in raw["weights"]],
                        [np.array(b, dtype=np.float64) for b in raw["biases"]],
                        float(raw["dropout_p"]), int(raw["seed"]),
                        raw.get("training_history_digest", ""))
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"malformed model file: {exc}") from exc
        if any(w.ndim != 2 for w in model.weights):
            raise ModelError("weights must be matrices")
        model.validate()
        if model.feature_dim != raw["feature_dim"] or model.layer_dims != list(raw["layer_dims"]):
            raise ModelError("declared dimensions do not match stored weights")
        return model

    @classmethod
    def from_json(cls, text: str) -> "VgaeModel":
        try:
            raw = json.loads(text)
        except ValueError as exc:
            raise ModelError(f"model file is not JSON: {exc}") from exc
        return cls.from_dict(raw)


@dataclass
class LatentSample:
    mu: np.ndarray
    logvar: np.ndarray
    z: np.ndarray


@dataclass
class GraphTensors:
    """Per-graph inputs reused across epochs: ``A_hat`` and ``A_hat @ X``."""

    a_hat: object
    x: np.ndarray
    ax: np.ndarray = field(init=False)

    def __post_init__(self):
        self.ax = np.asarray(self.a_hat @ self.x)

    @classmethod
    def from_graph(cls, graph) -> "GraphTensors":
        a = as_operator(normalize_adjacency(graph.edges, graph.n_nodes))
        return cls(a, np.asarray(graph.features, dtype=np.float64))

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass
class Noise:
    """Dropout masks (already scaled by ``1/(1-p)``) and reparameterization noise."""

    masks: tuple
    eps: np.ndarray

    @classmethod
    def draw(cls, rng: np.random.Generator, n: int, model: VgaeModel) -> "Noise":
        p = model.dropout_p
        keep = 1.0 / (1.0 - p)
        masks = tuple((rng.random((n, w.shape[1])) >= p) * keep for w in model.weights[:2])
        return cls(masks, rng.standard_normal((n, model.latent_dim)))


def forward(model: VgaeModel, t: GraphTensors, noise: Noise | None = None):
    """Encoder pass. ``noise=None`` is inference mode: no dropout and ``z = mu``."""
    if t.x.shape[1] != model.feature_dim:
        raise ModelError(f"graph has {t.x.shape[1]} features, model expects {model.feature_dim}")
    W, b = model.weights, model.biases
    a = t.a_hat
    cache = {"ax": t.ax}
    p1 = t.ax @ W[0] + b[0]
    h1 = np.maximum(p1, 0.0)
    d1 = h1 * noise.masks[0] if noise is not None else h1
    ad1 = a @ d1
    p2 = ad1 @ W[1] + b[1]
    h2 = np.maximum(p2, 0.0)
    d2 = h2 * noise.masks[1] if noise is not None else h2
    ad2 = a @ d2
    p3 = ad2 @ W[2] + b[2]
    h3 = np.maximum(p3, 0.0)
    ah3 = a @ h3
    mu = ah3 @ W[3] + b[3]
    logvar = ah3 @ W[4] + b[4]
    if noise is not None:
        std = np.exp(0.5 * logvar)
        z = mu + std * noise.eps
        cache.update(std=std)
    else:
        z = mu
    cache.update(p1=p1, ad1=ad1, p2=p2, ad2=ad2, p3=p3, ah3=ah3)
    return LatentSample(mu, logvar, z), cache


def encode(model: VgaeModel, graph, mode: str = "infer", seed: int = 0) -> LatentSample:
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be train or infer, not {mode!r}")
    t = GraphTensors.from_graph(graph)
    noise = Noise.draw(np.random.default_rng(seed), t.n, model) if mode == "train" else None
    return forward(model, t, noise)[0]


def _edge_scores(z, pairs):
    return np.einsum("ij,ij->i", z[pairs[0]], z[pairs[1]])


def decode_loss(sample: LatentSample, pos_edges, neg_edges) -> dict:
    """Per-pair mean BCE of the inner-product decoder plus per-node mean KL."""
    return _loss(sample, np.asarray(pos_edges).reshape(2, -1),
                 np.asarray(neg_edges).reshape(2, -1))[0]


def _loss(sample: LatentSample, pos, neg, kl_weight: float = 1.0):
    pairs = np.concatenate([pos, neg], axis=1)
    labels = np.concatenate([np.ones(pos.shape[1]), np.zeros(neg.shape[1])])
    scores = _edge_scores(sample.z, pairs)
    # p and 1 - p both via expit so neither loses precision near saturation
    p, q = expit(scores), expit(-scores)
    hit = np.where(labels == 1.0, p, q)
    bce = -np.log(hit + PROB_EPS)
    m = len(labels)
    recon = float(bce.mean()) if m else 0.0
    n = sample.mu.shape[0]
    mu, lv = sample.mu, sample.logvar
    kl = float(-0.5 / n * np.sum(1.0 + lv - mu * mu - np.exp(lv)))
    # d/ds -log(p + eps) = -p q / (p + eps); for negatives the sign flips
    gscore = np.where(labels == 1.0, -1.0, 1.0) * p * q / (hit + PROB_EPS) / max(m, 1)
    out = {"loss": recon + kl_weight * kl, "recon": recon, "kl": kl}
    return out, (pairs, gscore)


def loss_and_grads(model: VgaeModel, t: GraphTensors, pos, neg, noise: Noise | None,
                   kl_weight: float = 1.0):
    """Loss terms and gradients w.r.t. ``model.params()`` (weights then biases).

    ``terms["loss"]`` is ``recon + kl_weight * kl``; ``kl`` itself is always
    the per-node mean.
    """
    sample, c = forward(model, t, noise)
    terms, (pairs, gscore) = _loss(sample, pos, neg, kl_weight)
    n = t.n
    z = sample.z
    dz = np.zeros_like(z)
    np.add.at(dz, pairs[0], gscore[:, None] * z[pairs[1]])
    np.add.at(dz, pairs[1], gscore[:, None] * z[pairs[0]])

    W = model.weights
    a = t.a_hat  # symmetric, so a.T == a
    dmu = dz + kl_weight * sample.mu / n
    dlv = kl_weight * 0.5 * (np.exp(sample.logvar) - 1.0) / n
    if noise is not None:
        dlv = dlv + dz * noise.eps * 0.5 * c["std"]

    gW, gb = [None] * 5, [None] * 5
    ah3 = c["ah3"]
    gW[3], gb[3] = ah3.T @ dmu, dmu.sum(0)
    gW[4], gb[4] = ah3.T @ dlv, dlv.sum(0)
    dp3 = (a @ (dmu @ W[3].T + dlv @ W[4].T)) * (c["p3"] > 0)
    gW[2], gb[2] = c["ad2"].T @ dp3, dp3.sum(0)
    dh2 = a @ (dp3 @ W[2].T)
    if noise is not None:
        dh2 = dh2 * noise.masks[1]
    dp2 = dh2 * (c["p2"] > 0)
    gW[1], gb[1] = c["ad1"].T @ dp2, dp2.sum(0)
    dh1 = a @ (dp2 @ W[1].T)
    if noise is not None:
        dh1 = dh1 * noise.masks[0]
    dp1 = dh1 * (c["p1"] > 0)
    gW[0], gb[0] = c["ax"].T @ dp1, dp1.sum(0)
    return terms, gW + gb
