"""Adam with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import NonFiniteGradientError

ADAM_EPS = 1e-8


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.99
    weight_decay: float = 4e-4

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("betas must lie strictly between 0 and 1")
        if self.learning_rate <= 0.0 or self.weight_decay < 0.0:
            raise ValueError("learning_rate must be positive, weight_decay non-negative")


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(
    weights: dict[str, T.Tensor],
    grads: dict[str, np.ndarray],
    state: AdamState,
    cfg: AdamConfig,
) -> None:
    """One bias-corrected update in place; decay multiplies weights first.

    A weight with no gradient this step (None or missing) still decays.
    """
    state.step += 1
    t = state.step
    decay = 1.0 - cfg.learning_rate * cfg.weight_decay
    for name, w in weights.items():
        g = grads.get(name)
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(name)
        w.data *= decay
        if g is None:
            continue
        m = state.m.setdefault(name, np.zeros_like(w.data))
        v = state.v.setdefault(name, np.zeros_like(w.data))
        m += (1.0 - cfg.beta1) * (g - m)
        v += (1.0 - cfg.beta2) * (g * g - v)
        m_hat = m / (1.0 - cfg.beta1**t)
        v_hat = v / (1.0 - cfg.beta2**t)
        w.data -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def collect_grads(weights: dict[str, T.Tensor]) -> dict[str, np.ndarray]:
    return {name: w.grad for name, w in weights.items() if w.grad is not None}
