"""Central finite-difference verification of analytic gradients.

The numeric side only ever calls the forward pass, so it stays independent of
the backward implementation it checks.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import tensor as T

FD_STEP = 1e-5
REL_TOL = 1e-3
ABS_TOL = 1e-6


def numeric_gradient(f: Callable[[], T.Tensor], leaf: T.Tensor, step: float = FD_STEP) -> np.ndarray:
    """d f / d leaf by central differences, perturbing one element at a time."""
    grad = np.zeros_like(leaf.data)
    flat = leaf.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = float(f().data)
        flat[i] = orig - step
        lo = float(f().data)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def check_gradients(
    f: Callable[[], T.Tensor],
    leaves: Sequence[T.Tensor],
    step: float = FD_STEP,
    rel_tol: float = REL_TOL,
    abs_tol: float = ABS_TOL,
) -> float:
    """Compare backward() against finite differences; return the worst error.

    The returned value is the largest per-element discrepancy measured as
    ``min(abs_diff, rel_diff)`` so a result below max(rel_tol, abs_tol)
    means every element passed at least one of the two tolerances.
    Raises AssertionError when any element fails both.
    """
    for leaf in leaves:
        leaf.zero_grad()
    loss = f()
    T.backward(loss)
    worst = 0.0
    for leaf in leaves:
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        numeric = numeric_gradient(f, leaf, step=step)
        diff = np.abs(analytic - numeric)
        scale = np.maximum(np.abs(analytic), np.abs(numeric))
        rel = diff / np.where(scale > 0.0, scale, 1.0)
        failed = (diff > abs_tol) & (rel > rel_tol)
        score = np.minimum(diff, rel)
        worst = max(worst, float(score.max()) if score.size else 0.0)
        if np.any(failed):
            idx = np.unravel_index(int(np.argmax(np.where(failed, score, -1.0))), leaf.data.shape)
            raise AssertionError(
                f"gradient mismatch at {idx}: analytic={analytic[idx]:.8g} numeric={numeric[idx]:.8g}"
            )
    return worst
