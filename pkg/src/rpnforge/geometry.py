"""Axis-aligned box arithmetic: IoU, box-delta encoding, clipping, scaling.

Boxes are half-open real rectangles [x1, x2) x [y1, y2) in pixel coordinates
with the origin at the image's upper-left corner; area = (x2-x1)*(y2-y1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# exp(x) overflows double precision just above this
_EXP_LIMIT = 709.0


@dataclass(frozen=True)
class Box2D:
    """Axis-aligned rectangle; x1 <= x2 and y1 <= y2, all coordinates finite."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"box coordinate {name}={v} is not finite")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(
                f"invalid box corners ({self.x1},{self.y1})-({self.x2},{self.y2})"
            )

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "Box2D":
        return cls(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)


@dataclass(frozen=True)
class BoxDelta:
    """Center offsets (tx, ty) in anchor units and log-scale factors (tw, th)."""

    tx: float
    ty: float
    tw: float
    th: float

    def __post_init__(self):
        for name in ("tx", "ty", "tw", "th"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"delta component {name} is not finite")


def iou(a: Box2D, b: Box2D) -> float:
    """Intersection over union of two boxes; 0 for degenerate or disjoint pairs."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between box arrays a [N,4] and b [M,4] -> [N,M].

    Zero-area boxes produce IoU 0 against everything, matching `iou`.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ix = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    iy = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0.0)
    return out


def encode_box(anchor: Box2D, target: Box2D) -> BoxDelta:
    """Express `target` as center offsets / log sizes relative to `anchor`."""
    if anchor.width <= 0.0 or anchor.height <= 0.0:
        raise ValueError(f"anchor has non-positive size {anchor.width}x{anchor.height}")
    if target.width <= 0.0 or target.height <= 0.0:
        raise ValueError(
            f"degenerate ground-truth box {target.width}x{target.height}"
        )
    acx, acy = anchor.center
    tcx, tcy = target.center
    return BoxDelta(
        tx=(tcx - acx) / anchor.width,
        ty=(tcy - acy) / anchor.height,
        tw=math.log(target.width / anchor.width),
        th=math.log(target.height / anchor.height),
    )


def decode_box(anchor: Box2D, delta: BoxDelta) -> Box2D:
    """Apply a delta to an anchor; exact inverse of encode_box."""
    if anchor.width <= 0.0 or anchor.height <= 0.0:
        raise ValueError(f"anchor has non-positive size {anchor.width}x{anchor.height}")
    if delta.tw > _EXP_LIMIT or delta.th > _EXP_LIMIT:
        raise ValueError(f"log-scale factor too large (tw={delta.tw}, th={delta.th})")
    acx, acy = anchor.center
    cx = acx + delta.tx * anchor.width
    cy = acy + delta.ty * anchor.height
    w = math.exp(delta.tw) * anchor.width
    h = math.exp(delta.th) * anchor.height
    return Box2D.from_center(cx, cy, w, h)


def decode_deltas(anchors: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Vectorized decode_box over anchor array [N,4] and delta array [N,4]."""
    anchors = np.asarray(anchors, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    acx = anchors[:, 0] + 0.5 * aw
    acy = anchors[:, 1] + 0.5 * ah
    cx = acx + deltas[:, 0] * aw
    cy = acy + deltas[:, 1] * ah
    w = np.exp(np.clip(deltas[:, 2], None, _EXP_LIMIT)) * aw
    h = np.exp(np.clip(deltas[:, 3], None, _EXP_LIMIT)) * ah
    return np.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], axis=1)


def encode_deltas(anchors: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Vectorized encode_box; anchors and targets must have positive sizes."""
    anchors = np.asarray(anchors, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    tw = targets[:, 2] - targets[:, 0]
    th = targets[:, 3] - targets[:, 1]
    if np.any(aw <= 0) or np.any(ah <= 0):
        raise ValueError("anchor with non-positive size")
    if np.any(tw <= 0) or np.any(th <= 0):
        raise ValueError("degenerate ground-truth box")
    acx = anchors[:, 0] + 0.5 * aw
    acy = anchors[:, 1] + 0.5 * ah
    tcx = targets[:, 0] + 0.5 * tw
    tcy = targets[:, 1] + 0.5 * th
    return np.stack(
        [(tcx - acx) / aw, (tcy - acy) / ah, np.log(tw / aw), np.log(th / ah)], axis=1
    )


def clip_box(b: Box2D, width: float, height: float) -> Box2D:
    """Clamp a box to [0,width] x [0,height]."""
    if width <= 0 or height <= 0:
        raise ValueError(f"clip extent must be positive, got {width}x{height}")
    return Box2D(
        min(max(b.x1, 0.0), width),
        min(max(b.y1, 0.0), height),
        min(max(b.x2, 0.0), width),
        min(max(b.y2, 0.0), height),
    )


def scale_box(b: Box2D, sigma: float) -> Box2D:
    """Divide every coordinate by sigma (labels follow an image shrunk by sigma)."""
    if sigma <= 0:
        raise ValueError(f"scale factor must be positive, got {sigma}")
    return Box2D(b.x1 / sigma, b.y1 / sigma, b.x2 / sigma, b.y2 / sigma)


def box_to_array(b: Box2D) -> np.ndarray:
    return np.array([b.x1, b.y1, b.x2, b.y2], dtype=np.float64)


def boxes_to_array(boxes) -> np.ndarray:
    """Stack Box2D values into an [N,4] float array (empty -> shape (0,4))."""
    if not boxes:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([[b.x1, b.y1, b.x2, b.y2] for b in boxes], dtype=np.float64)


def array_to_boxes(arr: np.ndarray) -> list[Box2D]:
    return [Box2D(float(r[0]), float(r[1]), float(r[2]), float(r[3])) for r in np.asarray(arr).reshape(-1, 4)]
