"""Adam optimizer and the step-decay learning-rate schedule."""

from dataclasses import dataclass

import numpy as np


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """Bias-corrected Adam update, applied in place. Returns ``(params, state)``."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


@dataclass(frozen=True)
class StepDecay:
    """``lr0 / factor**k`` at epochs ``k * every``; frozen from ``fixed_after`` on."""

    lr0: float = 0.01
    factor: float = 3.0
    every: int = 150
    fixed_after: int = 750

    def __call__(self, epoch: int) -> float:
        k = min(epoch, self.fixed_after) // self.every
        return self.lr0 / self.factor ** k
