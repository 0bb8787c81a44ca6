"""Anchor grids for the region proposal network.

Covers shape construction from scale/ratio sets, dense grid generation,
IoU-based ground-truth assignment and training minibatch sampling. The
"original" proposal variant uses scales [128, 256, 512]; the "extended"
variant adds 32 and 64 to reach small objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Box2D, boxes_to_array, iou_matrix

ORIGINAL_SCALES = (128.0, 256.0, 512.0)
EXTENDED_SCALES = (32.0, 64.0, 128.0, 256.0, 512.0)
DEFAULT_RATIOS = (1.0, 0.5, 2.0)


@dataclass(frozen=True)
class AnchorSpec:
    """Scale/ratio/stride description of one anchor family.

    Ratios are height:width; each shape keeps area == scale**2.
    """

    scales: tuple[float, ...] = ORIGINAL_SCALES
    ratios: tuple[float, ...] = DEFAULT_RATIOS
    stride: int = 16

    def __post_init__(self):
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ValueError(f"scales must be positive, got {self.scales}")
        if any(b <= a for a, b in zip(self.scales, self.scales[1:])):
            raise ValueError(f"scales must be strictly increasing, got {self.scales}")
        if not self.ratios or any(r <= 0 for r in self.ratios):
            raise ValueError(f"ratios must be positive, got {self.ratios}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")

    @property
    def shapes_per_location(self) -> int:
        return len(self.scales) * len(self.ratios)

    @classmethod
    def original(cls, stride: int = 16) -> "AnchorSpec":
        return cls(scales=ORIGINAL_SCALES, stride=stride)

    @classmethod
    def extended(cls, stride: int = 16) -> "AnchorSpec":
        return cls(scales=EXTENDED_SCALES, stride=stride)


@dataclass(frozen=True)
class AnchorGrid:
    """Materialized anchors for one feature map.

    `boxes` is [feat_h * feat_w * k, 4], row-major over locations with the
    spec's shape order within each location. Anchors are unclipped and may
    cross image borders.
    """

    boxes: np.ndarray
    feat_h: int
    feat_w: int
    spec: AnchorSpec

    def __len__(self) -> int:
        return self.boxes.shape[0]

    def anchor(self, i: int) -> Box2D:
        x1, y1, x2, y2 = self.boxes[i]
        return Box2D(float(x1), float(y1), float(x2), float(y2))

    @property
    def anchors(self) -> list[Box2D]:
        return [self.anchor(i) for i in range(len(self))]


_POSITIVE = "positive"
_NEGATIVE = "negative"
_IGNORE = "ignore"


@dataclass(frozen=True)
class AnchorLabel:
    """Training assignment for one anchor: positive (with matched ground-truth
    index), negative, or ignored."""

    kind: str
    gt_index: int | None = None

    @classmethod
    def positive(cls, gt_index: int) -> "AnchorLabel":
        return cls(_POSITIVE, gt_index)

    @classmethod
    def negative(cls) -> "AnchorLabel":
        return cls(_NEGATIVE)

    @classmethod
    def ignore(cls) -> "AnchorLabel":
        return cls(_IGNORE)

    @property
    def is_positive(self) -> bool:
        return self.kind == _POSITIVE

    @property
    def is_negative(self) -> bool:
        return self.kind == _NEGATIVE


def build_anchor_shapes(spec: AnchorSpec) -> list[tuple[float, float]]:
    """(width, height) per scale/ratio pair; w = s/sqrt(r), h = s*sqrt(r)."""
    shapes = []
    for s in spec.scales:
        for r in spec.ratios:
            root = math.sqrt(r)
            shapes.append((s / root, s * root))
    return shapes


def generate_anchors(spec: AnchorSpec, feat_h: int, feat_w: int) -> AnchorGrid:
    """Tile every anchor shape at each feature-map location.

    Centers sit at ((col + 0.5) * stride, (row + 0.5) * stride); no clipping.
    """
    if feat_h < 1 or feat_w < 1:
        raise ValueError(f"feature map must be at least 1x1, got {feat_h}x{feat_w}")
    shapes = np.array(build_anchor_shapes(spec), dtype=np.float64)  # [k, 2]
    k = shapes.shape[0]
    half = 0.5 * shapes  # [k, 2] half extents
    base = np.concatenate([-half, half], axis=1)  # [k, 4] around origin

    cols = (np.arange(feat_w, dtype=np.float64) + 0.5) * spec.stride
    rows = (np.arange(feat_h, dtype=np.float64) + 0.5) * spec.stride
    cx, cy = np.meshgrid(cols, rows)  # [feat_h, feat_w]
    centers = np.stack([cx, cy, cx, cy], axis=-1).reshape(-1, 1, 4)
    boxes = (centers + base[None, :, :]).reshape(-1, 4)
    return AnchorGrid(boxes=boxes, feat_h=feat_h, feat_w=feat_w, spec=spec)


def label_anchors(
    grid: AnchorGrid,
    gts: list[Box2D],
    pos_thresh: float = 0.7,
    neg_thresh: float = 0.3,
) -> list[AnchorLabel]:
    """Assign positive/negative/ignore to every anchor.

    Positive: the anchor holds the top IoU for some ground truth (ties share
    the label) or has IoU > pos_thresh with any ground truth. Negative: max
    IoU < neg_thresh and not positive. Everything else is ignored. A matched
    ground-truth index is the anchor's own argmax.
    """
    if not 0.0 <= neg_thresh <= pos_thresh <= 1.0:
        raise ValueError(f"need 0 <= neg {neg_thresh} <= pos {pos_thresh} <= 1")
    n = len(grid)
    if not gts:
        return [AnchorLabel.negative()] * n

    ious = iou_matrix(grid.boxes, boxes_to_array(gts))  # [n, g]
    max_iou = ious.max(axis=1)
    best_gt = ious.argmax(axis=1)

    positive = max_iou > pos_thresh
    # per-ground-truth argmax: every anchor tied at a ground truth's best IoU
    # becomes positive, provided that best IoU is nonzero
    gt_best = ious.max(axis=0)
    for g in range(ious.shape[1]):
        if gt_best[g] > 0.0:
            positive |= ious[:, g] == gt_best[g]

    labels = []
    for i in range(n):
        if positive[i]:
            labels.append(AnchorLabel.positive(int(best_gt[i])))
        elif max_iou[i] < neg_thresh:
            labels.append(AnchorLabel.negative())
        else:
            labels.append(AnchorLabel.ignore())
    return labels


def sample_minibatch(
    labels: list[AnchorLabel],
    cap: int = 256,
    rng: np.random.Generator | None = None,
) -> list[int]:
    """Pick up to cap anchors for the proposal-stage loss.

    Up to cap/2 positives drawn uniformly; negatives fill the remainder.
    Fewer available means take all of that kind.
    """
    if cap < 2:
        raise ValueError(f"cap must be >= 2, got {cap}")
    rng = rng if rng is not None else np.random.default_rng()
    pos_idx = np.array([i for i, l in enumerate(labels) if l.is_positive], dtype=np.int64)
    neg_idx = np.array([i for i, l in enumerate(labels) if l.is_negative], dtype=np.int64)
    if pos_idx.size == 0 and neg_idx.size == 0:
        raise ValueError("no positive or negative anchors to sample (untrainable image)")

    n_pos = min(pos_idx.size, cap // 2)
    n_neg = min(neg_idx.size, cap - n_pos)
    chosen_pos = rng.choice(pos_idx, size=n_pos, replace=False) if n_pos else np.empty(0, np.int64)
    chosen_neg = rng.choice(neg_idx, size=n_neg, replace=False) if n_neg else np.empty(0, np.int64)
    return [int(i) for i in chosen_pos] + [int(i) for i in chosen_neg]


def anchor_coverage_recall(
    spec: AnchorSpec,
    image_w: float,
    image_h: float,
    gts: list[Box2D],
    iou_thresh: float,
) -> float:
    """Fraction of ground truths whose best anchor over the image grid reaches
    iou_thresh. Quantifies how well an anchor family can see given objects."""
    if not 0.0 < iou_thresh <= 1.0:
        raise ValueError(f"iou threshold must be in (0, 1], got {iou_thresh}")
    if not gts:
        raise ValueError("coverage recall over an empty ground-truth set is undefined")
    feat_h = max(1, int(image_h // spec.stride))
    feat_w = max(1, int(image_w // spec.stride))
    grid = generate_anchors(spec, feat_h, feat_w)
    ious = iou_matrix(grid.boxes, boxes_to_array(gts))
    covered = (ious.max(axis=0) >= iou_thresh).sum()
    return float(covered) / len(gts)


def dump_anchor_grid(grid: AnchorGrid) -> str:
    """One anchor per line: `row col shape_idx x1 y1 x2 y2`."""
    k = grid.spec.shapes_per_location
    lines = []
    for i in range(len(grid)):
        loc, shape_idx = divmod(i, k)
        row, col = divmod(loc, grid.feat_w)
        x1, y1, x2, y2 = grid.boxes[i]
        lines.append(f"{row} {col} {shape_idx} {x1:.4f} {y1:.4f} {x2:.4f} {y2:.4f}")
    return "\n".join(lines) + ("\n" if lines else "")
