"""Stochastic gradient descent over Param collections."""

from __future__ import annotations

import numpy as np

from .core import Param


def sgd_step(
    params: list[Param],
    lr: float,
    momentum: float = 0.0,
    weight_decay: float = 0.0,
) -> None:
    """value <- value - lr * step for every param, then zero all grads.

    Plain SGD by default; momentum and weight decay are optional extras.
    Raises on any non-finite gradient, naming the parameter.
    """
    for p in params:
        if not np.isfinite(p.grad).all():
            raise ValueError(f"non-finite gradient in parameter {p.name!r}")
        g = p.grad
        if weight_decay:
            g = g + weight_decay * p.value
        if momentum:
            if p.velocity is None:
                p.velocity = np.zeros_like(p.value)
            p.velocity = momentum * p.velocity + g
            g = p.velocity
        p.value -= lr * g
        p.zero_grad()
