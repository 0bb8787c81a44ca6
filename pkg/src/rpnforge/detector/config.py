"""Detector configuration: extractor pattern, anchor family, heads, losses."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..anchors import AnchorSpec, DEFAULT_RATIOS, EXTENDED_SCALES, ORIGINAL_SCALES

PATTERNS = ("plain", "residual_original", "residual_identity")
ANCHOR_VARIANTS = ("original", "extended")


@dataclass(frozen=True)
class DetectorConfig:
    # feature extractor
    pattern: str = "residual_identity"
    widths: tuple[int, ...] = (8, 16, 24, 32)  # one per pooling stage
    depth: int = 2  # residual blocks after the last pool
    stride: int = 16  # power of two, realized by the pooling stages
    batch_norm: bool = False

    # region proposal network
    anchor_variant: str = "extended"
    anchor_ratios: tuple[float, ...] = DEFAULT_RATIOS
    rpn_channels: int = 64
    rpn_batch: int = 256
    rpn_pos_thresh: float = 0.7
    rpn_neg_thresh: float = 0.3
    pre_nms_top_n: int = 2000
    post_nms_top_n_train: int = 300
    post_nms_top_n_infer: int = 100
    rpn_nms_thresh: float = 0.7

    # prediction stage
    roi_pool_h: int = 7
    roi_pool_w: int = 7
    fc_dim: int = 64
    dropout: float = 0.5
    rois_per_image: int = 128
    roi_fg_iou: float = 0.5
    roi_fg_fraction: float = 0.25

    # losses and outputs
    loss_lambda: float = 10.0
    classes: tuple[str, ...] = ("background", "Car")
    final_nms_thresh: float = 0.3
    score_thresh: float = 0.5

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown extractor pattern {self.pattern!r}")
        if self.anchor_variant not in ANCHOR_VARIANTS:
            raise ValueError(f"unknown anchor variant {self.anchor_variant!r}")
        if self.stride < 2 or self.stride & (self.stride - 1):
            raise ValueError(f"stride must be a power of two >= 2, got {self.stride}")
        if not self.widths or any(w < 1 for w in self.widths):
            raise ValueError(f"widths must be positive, got {self.widths}")
        if self.roi_pool_h < 1 or self.roi_pool_w < 1:
            raise ValueError("roi pool output must be at least 1x1")
        if self.loss_lambda <= 0:
            raise ValueError(f"loss_lambda must be positive, got {self.loss_lambda}")
        if len(self.classes) < 2 or self.classes[0] != "background":
            raise ValueError("classes must start with 'background' and name >= 1 category")

    @property
    def anchor_scales(self) -> tuple[float, ...]:
        return EXTENDED_SCALES if self.anchor_variant == "extended" else ORIGINAL_SCALES

    def anchor_spec(self) -> AnchorSpec:
        return AnchorSpec(scales=self.anchor_scales, ratios=self.anchor_ratios, stride=self.stride)

    @property
    def anchors_per_location(self) -> int:
        return len(self.anchor_scales) * len(self.anchor_ratios)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def stage_widths(self) -> tuple[int, ...]:
        """Per pooling stage channel widths, padded by repeating the last."""
        n_stages = self.stride.bit_length() - 1
        ws = list(self.widths[:n_stages])
        while len(ws) < n_stages:
            ws.append(ws[-1])
        return tuple(ws)
