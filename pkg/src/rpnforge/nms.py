"""Greedy non-maximum suppression over scored detections.

Repeatedly keeps the highest-scoring box and discards every remaining box
overlapping it beyond the threshold. Score ties break on the original
position so results are reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Box2D, iou_matrix


@dataclass(frozen=True)
class ScoredBox:
    """A detection candidate: box, confidence in [0,1], category, and its
    position in the originating list (used for deterministic tie-breaks)."""

    box: Box2D
    score: float
    class_id: int = 0
    source_index: int = 0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0 or self.score != self.score:
            raise ValueError(f"score must be finite in [0,1], got {self.score}")


def greedy_nms(dets: list[ScoredBox], n_t: float) -> list[ScoredBox]:
    """Suppress boxes with IoU strictly above n_t against a kept higher-scored
    box. Output is sorted by descending score, ties by ascending source_index."""
    if not 0.0 <= n_t < 1.0:
        raise ValueError(f"nms threshold must be in [0,1), got {n_t}")
    if not dets:
        return []

    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].source_index))
    boxes = np.array(
        [[dets[i].box.x1, dets[i].box.y1, dets[i].box.x2, dets[i].box.y2] for i in order]
    )
    alive = np.ones(len(order), dtype=bool)
    kept: list[ScoredBox] = []
    for i in range(len(order)):
        if not alive[i]:
            continue
        kept.append(dets[order[i]])
        rest = np.nonzero(alive[i + 1 :])[0] + i + 1
        if rest.size:
            overlaps = iou_matrix(boxes[i : i + 1], boxes[rest])[0]
            alive[rest[overlaps > n_t]] = False
    return kept


def per_class_nms(dets: list[ScoredBox], n_t: float) -> list[ScoredBox]:
    """Apply greedy_nms independently within each class, then merge and
    re-sort by descending score (ties by source_index)."""
    by_class: dict[int, list[ScoredBox]] = {}
    for d in dets:
        by_class.setdefault(d.class_id, []).append(d)
    merged: list[ScoredBox] = []
    for cid in sorted(by_class):
        merged.extend(greedy_nms(by_class[cid], n_t))
    merged.sort(key=lambda d: (-d.score, d.source_index))
    return merged
