"""rpnforge: a desk-scale two-stage object detection toolkit.

Box geometry, anchor grids, greedy NMS, a from-scratch differentiable
neural core, the composed detector with joint training, KITTI-format I/O,
synthetic scene generation, and precision/recall/AP evaluation.
"""

from .geometry import Box2D, BoxDelta, clip_box, decode_box, encode_box, iou, scale_box
from .anchors import (
    AnchorGrid,
    AnchorLabel,
    AnchorSpec,
    anchor_coverage_recall,
    build_anchor_shapes,
    generate_anchors,
    label_anchors,
    sample_minibatch,
)
from .nms import ScoredBox, greedy_nms, per_class_nms

__version__ = "0.1.0"

__all__ = [
    "Box2D",
    "BoxDelta",
    "iou",
    "encode_box",
    "decode_box",
    "clip_box",
    "scale_box",
    "AnchorSpec",
    "AnchorGrid",
    "AnchorLabel",
    "build_anchor_shapes",
    "generate_anchors",
    "label_anchors",
    "sample_minibatch",
    "anchor_coverage_recall",
    "ScoredBox",
    "greedy_nms",
    "per_class_nms",
    "__version__",
]
