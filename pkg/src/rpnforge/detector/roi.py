"""Region-of-interest pooling and training sample selection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import Box2D, boxes_to_array, encode_box, iou_matrix
from .config import DetectorConfig


@dataclass(frozen=True)
class RoiSample:
    """A sampled region with its class target; foreground samples carry the
    encoded regression target toward their matched ground truth."""

    box: Box2D
    target_class: int
    target_delta: np.ndarray | None  # [4] for foreground, None for background


def sample_rois(
    proposals: list[Box2D],
    gts: list[tuple[Box2D, int]],
    cfg: DetectorConfig,
    rng: np.random.Generator,
) -> list[RoiSample]:
    """Label proposals by best-IoU ground truth and draw the training set.

    Ground-truth boxes join the candidate pool so foreground is never empty.
    Up to fg_fraction * rois_per_image foregrounds are drawn, background
    fills the remainder.
    """
    candidates = list(proposals) + [b for b, _ in gts]
    if not candidates:
        return []
    boxes = boxes_to_array(candidates)
    if gts:
        ious = iou_matrix(boxes, boxes_to_array([b for b, _ in gts]))
        best = ious.max(axis=1)
        best_gt = ious.argmax(axis=1)
    else:
        best = np.zeros(len(candidates))
        best_gt = np.zeros(len(candidates), dtype=np.int64)

    fg_idx = np.nonzero(best >= cfg.roi_fg_iou)[0]
    bg_idx = np.nonzero(best < cfg.roi_fg_iou)[0]
    n_fg = min(fg_idx.size, int(round(cfg.roi_fg_fraction * cfg.rois_per_image)))
    n_bg = min(bg_idx.size, cfg.rois_per_image - n_fg)
    chosen_fg = rng.choice(fg_idx, size=n_fg, replace=False) if n_fg else np.empty(0, np.int64)
    chosen_bg = rng.choice(bg_idx, size=n_bg, replace=False) if n_bg else np.empty(0, np.int64)

    samples: list[RoiSample] = []
    for i in chosen_fg:
        gt_box, gt_class = gts[int(best_gt[i])]
        delta = encode_box(candidates[int(i)], gt_box)
        samples.append(
            RoiSample(
                box=candidates[int(i)],
                target_class=gt_class,
                target_delta=np.array([delta.tx, delta.ty, delta.tw, delta.th]),
            )
        )
    for i in chosen_bg:
        samples.append(RoiSample(box=candidates[int(i)], target_class=0, target_delta=None))
    return samples


def roi_pool(
    features: np.ndarray,
    roi: Box2D,
    stride: int,
    out_hw: tuple[int, int],
) -> tuple[np.ndarray, np.ndarray]:
    """Max-pool an image-coordinate roi into a fixed [out_h, out_w, C] grid.

    The roi is projected onto the feature map (divide by stride), covered
    cells are split into proportional bins, and sub-cell bins replicate the
    nearest covered cell. Returns (pooled, argmax) where argmax holds the
    flat feature index feeding each output cell, for the backward pass.
    """
    fh, fw, c = features.shape
    out_h, out_w = out_hw
    if roi.width <= 0.0 or roi.height <= 0.0:
        raise ValueError(f"roi {roi} has zero area after projection")
    r0 = max(0, min(fh - 1, math.floor(roi.y1 / stride)))
    r1 = max(r0 + 1, min(fh, math.ceil(roi.y2 / stride)))
    c0 = max(0, min(fw - 1, math.floor(roi.x1 / stride)))
    c1 = max(c0 + 1, min(fw, math.ceil(roi.x2 / stride)))
    if roi.x2 / stride <= 0 or roi.y2 / stride <= 0 or roi.x1 / stride >= fw or roi.y1 / stride >= fh:
        raise ValueError(f"roi {roi} projects outside the {fh}x{fw} feature extent")
    rows = r1 - r0
    cols = c1 - c0

    def bin_range(i: int, total: int, bins: int, lo: int) -> tuple[int, int]:
        start = lo + min(total - 1, round(i * total / bins))
        end = max(start + 1, lo + round((i + 1) * total / bins))
        return start, end

    pooled = np.empty((out_h, out_w, c))
    argmax = np.empty((out_h, out_w, c), dtype=np.int64)
    for bi in range(out_h):
        rs, re = bin_range(bi, rows, out_h, r0)
        for bj in range(out_w):
            cs, ce = bin_range(bj, cols, out_w, c0)
            window = features[rs:re, cs:ce, :].reshape(-1, c)
            flat_pos = window.argmax(axis=0)
            pooled[bi, bj] = window[flat_pos, np.arange(c)]
            wrow, wcol = np.divmod(flat_pos, ce - cs)
            argmax[bi, bj] = (rs + wrow) * fw + (cs + wcol)
    return pooled, argmax


def roi_pool_backward(
    grad_pooled: np.ndarray,
    argmax: np.ndarray,
    feat_shape: tuple[int, int, int],
    grad_features: np.ndarray | None = None,
) -> np.ndarray:
    """Scatter pooled-cell gradients back to their argmax feature cells."""
    fh, fw, c = feat_shape
    if grad_features is None:
        grad_features = np.zeros((fh, fw, c))
    flat = grad_features.reshape(fh * fw, c)
    cc = np.broadcast_to(np.arange(c), argmax.shape)
    np.add.at(flat, (argmax.ravel(), cc.ravel()), grad_pooled.ravel())
    return grad_features
