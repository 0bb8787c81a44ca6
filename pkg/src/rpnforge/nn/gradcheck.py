"""Central finite-difference verification of analytic gradients.

The harness treats an operation as a scalar-valued function (losses are
scalar already; layer outputs are reduced through a fixed random projection)
and compares its analytic gradient elementwise against central differences.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .core import Param


def max_rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise |a-b| / max(|a|,|b|,1e-8)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float((np.abs(a - b) / denom).max()) if a.size else 0.0


def finite_difference_check(
    func: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x: np.ndarray,
    eps: float = 1e-5,
) -> float:
    """func maps x to (scalar loss, analytic gradient wrt x); returns the max
    relative error of the analytic gradient against central differences."""
    x = np.asarray(x, dtype=np.float64)
    _, analytic = func(x)
    numeric = np.zeros_like(x)
    flat_num = numeric.ravel()
    for i in range(x.size):
        xp = x.copy()
        xp.ravel()[i] += eps
        xm = x.copy()
        xm.ravel()[i] -= eps
        lp, _ = func(xp)
        lm, _ = func(xm)
        flat_num[i] = (lp - lm) / (2.0 * eps)
    return max_rel_error(analytic, numeric)


def check_param_gradients(
    forward_loss: Callable[[], float],
    run_backward: Callable[[], None],
    params: list[Param],
    eps: float = 1e-5,
    coords_per_param: int | None = None,
    rng: np.random.Generator | None = None,
    coord_strategy: str = "random",
) -> dict[str, float]:
    """Compare each parameter's accumulated gradient to central differences.

    forward_loss() evaluates the scalar loss at the current parameter values
    and must be deterministic (fix any sampling outside the closure);
    run_backward() populates the gradients for one forward evaluation.
    coords_per_param limits the number of checked coordinates for expensive
    composites; None checks every coordinate. coord_strategy "largest" picks
    the largest-magnitude gradient entries (the ones float64 central
    differences can actually resolve), "random" picks uniformly.
    """
    for p in params:
        p.zero_grad()
    run_backward()
    analytic = {p.name: p.grad.copy() for p in params}
    rng = rng if rng is not None else np.random.default_rng(0)

    errors: dict[str, float] = {}
    for p in params:
        flat = p.value.ravel()
        n = flat.size
        if coords_per_param is not None and n > coords_per_param:
            if coord_strategy == "largest":
                coords = np.argsort(-np.abs(analytic[p.name].ravel()))[:coords_per_param]
            else:
                coords = rng.choice(n, size=coords_per_param, replace=False)
        else:
            coords = np.arange(n)
        worst = 0.0
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            lp = forward_loss()
            flat[i] = orig - eps
            lm = forward_loss()
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * eps)
            worst = max(worst, max_rel_error(analytic[p.name].ravel()[i], numeric))
        errors[p.name] = worst
        p.zero_grad()
    return errors


def projection_loss(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Fixed random projection used to reduce a tensor output to a scalar."""
    return rng.standard_normal(shape)
