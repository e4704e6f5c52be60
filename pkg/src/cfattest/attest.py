"""Embedding comparison, threshold calibration and attestation verdicts."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, EmptySetError, ProfileError
from .gnn.model import VgaeModel, encode

PROFILE_VERSION = 1
_CHUNK = 512


def directed_hausdorff(a, b) -> float:
    """``max_{x in a} min_{y in b} ||x - y||_2`` for row sets ``a`` and ``b``.

    Squared distances are accumulated column by column so the summation order
    is fixed (left to right over coordinates) regardless of array sizes.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or len(a) == 0 or len(b) == 0:
        raise EmptySetError("directed Hausdorff needs two non-empty point sets")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch {a.shape[1]} vs {b.shape[1]}")
    worst = 0.0
    for start in range(0, len(a), _CHUNK):
        block = a[start:start + _CHUNK]
        d2 = np.zeros((len(block), len(b)))
        for k in range(a.shape[1]):
            diff = block[:, k, None] - b[None, :, k]
            d2 += diff * diff
        worst = max(worst, float(d2.min(axis=1).max()))
    return float(np.sqrt(worst))


def embed(model: VgaeModel, graph) -> np.ndarray:
    """Inference-mode node embeddings; row ``i`` belongs to node ``i``."""
    return encode(model, graph, mode="infer").mu


def threshold(distances) -> float:
    d = np.asarray(distances, dtype=np.float64)
    if d.size == 0:
        raise CalibrationError("validation set is empty")
    return float(d.mean() + 2.0 * d.std())


@dataclass
class AttestationProfile:
    reference_embeddings: np.ndarray
    threshold: float
    calibration: list
    n_val: int
    model_digest: str = ""

    def to_json(self) -> str:
        return json.dumps({
            "format_version": PROFILE_VERSION,
            "model_digest": self.model_digest,
            "reference_embeddings": self.reference_embeddings.tolist(),
            "distances": [float(d) for d in self.calibration],
            "n_val": self.n_val,
            "threshold": self.threshold,
        }, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "AttestationProfile":
        try:
            raw = json.loads(text)
            if raw["format_version"] != PROFILE_VERSION:
                raise ProfileError(f"unsupported profile version {raw['format_version']}")
            prof = cls(np.array(raw["reference_embeddings"], dtype=np.float64),
                       float(raw["threshold"]), [float(d) for d in raw["distances"]],
                       int(raw["n_val"]), str(raw["model_digest"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise ProfileError(f"malformed profile: {exc}") from exc
        if prof.reference_embeddings.ndim != 2 or len(prof.calibration) != prof.n_val:
            raise ProfileError("profile fields are inconsistent")
        return prof


@dataclass(frozen=True)
class Verdict:
    distance: float
    threshold: float
    outcome: str
    trace_id: str = ""

    @property
    def malicious(self) -> bool:
        return self.outcome == "malicious"

    def to_json(self) -> str:
        return json.dumps({"trace_id": self.trace_id, "distance": self.distance,
                           "threshold": self.threshold, "outcome": self.outcome})


def decide(distance: float, t: float, trace_id: str = "") -> Verdict:
    return Verdict(distance, t, "malicious" if distance > t else "benign", trace_id)


def calibrate(model: VgaeModel, ref_graph, val_graphs) -> AttestationProfile:
    """Reference embeddings of trace zero plus a mean + 2 std distance threshold."""
    if len(val_graphs) == 0:
        raise CalibrationError("at least one validation graph is required")
    ref = embed(model, ref_graph)
    distances = [directed_hausdorff(embed(model, g), ref) for g in val_graphs]
    return AttestationProfile(ref, threshold(distances), distances, len(distances),
                              model.digest())


def attest(profile: AttestationProfile, model: VgaeModel, graph, trace_id: str = "") -> Verdict:
    if profile.model_digest and profile.model_digest != model.digest():
        raise ProfileError("profile was calibrated with a different model")
    if profile.reference_embeddings.shape[1] != model.latent_dim:
        raise ProfileError("reference embedding width does not match the model")
    emb = embed(model, graph)
    return decide(directed_hausdorff(emb, profile.reference_embeddings), profile.threshold,
                  trace_id)
