"""Parameter container and initialization helpers for the neural core.

All tensors are dense float64 numpy arrays; gradients accumulate into the
paired `grad` array and are zeroed by the optimizer step.
"""

from __future__ import annotations

import numpy as np


class Param:
    """A learnable tensor paired with its gradient accumulator."""

    __slots__ = ("name", "value", "grad", "velocity")

    def __init__(self, value: np.ndarray, name: str = ""):
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.name = name
        self.velocity: np.ndarray | None = None  # allocated on first momentum step

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.value.shape})"


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()


def he_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Gaussian init with variance 2/fan_in (suits relu-activated layers)."""
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
