"""Image preparation: size-capped uniform downscale and zero-mean shift.

The scale factor sigma is the smallest uniform shrink that fits the long
side under long_max and the short side under short_max; images already
within limits keep sigma = 1 and their exact pixel geometry. Ground-truth
boxes are scaled by the same sigma elsewhere.
"""

from __future__ import annotations

import numpy as np


def preprocess_image(
    image: np.ndarray,
    long_max: int = 1000,
    short_max: int = 600,
) -> tuple[np.ndarray, float]:
    """Returns (float64 [H', W', 3] zero-mean tensor, sigma)."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"expected a nonempty [H,W,3] image, got shape {img.shape}")
    h, w = img.shape[:2]
    long_side, short_side = max(h, w), min(h, w)
    sigma = max(1.0, long_side / long_max, short_side / short_max)
    if sigma > 1.0:
        out_h = max(1, round(h / sigma))
        out_w = max(1, round(w / sigma))
        img = _bilinear_resample(img, out_h, out_w, sigma)
    img = img - img.mean(axis=(0, 1))
    return img, sigma


def _bilinear_resample(img: np.ndarray, out_h: int, out_w: int, sigma: float) -> np.ndarray:
    """Sample src = (dst + 0.5) * sigma - 0.5, clamped to the source extent."""
    h, w = img.shape[:2]
    ys = np.clip((np.arange(out_h) + 0.5) * sigma - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * sigma - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def pad_to_multiple(img: np.ndarray, multiple: int) -> np.ndarray:
    """Zero-pad bottom/right so both spatial dims divide `multiple`."""
    h, w = img.shape[:2]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return img
    return np.pad(img, ((0, ph), (0, pw), (0, 0)))
