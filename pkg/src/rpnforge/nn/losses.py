"""Classification and regression losses with analytic gradients."""

from __future__ import annotations

import numpy as np


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax over the last axis; probabilities sum to 1."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, target_class: int) -> tuple[float, np.ndarray]:
    """-log softmax(logits)[target]; returns (loss, gradient wrt logits)."""
    logits = np.asarray(logits, dtype=np.float64)
    c = logits.shape[-1]
    if c < 2:
        raise ValueError(f"need at least 2 classes, got {c}")
    if not 0 <= target_class < c:
        raise ValueError(f"target class {target_class} out of range [0,{c})")
    z = logits - logits.max()
    logsumexp = np.log(np.exp(z).sum())
    loss = float(logsumexp - z[target_class])
    grad = np.exp(z - logsumexp)
    grad[target_class] -= 1.0
    return loss, grad


def smooth_l1(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Piecewise robust regression loss summed over components.

    Per component d = pred - target: 0.5*d^2 for |d| < 1, |d| - 0.5 otherwise.
    Returns (loss, gradient wrt pred).
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    d = pred - target
    small = np.abs(d) < 1.0
    loss = float(np.where(small, 0.5 * d * d, np.abs(d) - 0.5).sum())
    grad = np.where(small, d, np.sign(d))
    return loss, grad
