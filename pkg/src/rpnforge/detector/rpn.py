"""Region proposal head and proposal decoding.

A 3x3 convolution over the shared features feeds two 1x1 heads: per-anchor
object/background logits (2k channels) and box deltas (4k channels). The
per-anchor unpacking follows the anchor grid's ordering: row-major over
locations, shape index within a location.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..anchors import AnchorGrid
from ..geometry import Box2D, decode_deltas
from ..nn.core import Param
from ..nn.layers import Activation, Conv2d
from ..nms import ScoredBox, greedy_nms
from .config import DetectorConfig


@dataclass(frozen=True)
class Proposal:
    """A clipped candidate region with its objectness probability."""

    box: Box2D
    objectness: float


class RpnHead:
    def __init__(self, in_channels: int, cfg: DetectorConfig, rng: np.random.Generator):
        k = cfg.anchors_per_location
        self.k = k
        self.conv = Conv2d(3, in_channels, cfg.rpn_channels, pad=1, rng=rng, name="rpn.conv")
        self.act = Activation("relu")
        self.cls = Conv2d(1, cfg.rpn_channels, 2 * k, rng=rng, name="rpn.cls")
        self.reg = Conv2d(1, cfg.rpn_channels, 4 * k, rng=rng, name="rpn.reg")

    def forward(self, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """-> (logits [H,W,2k], deltas [H,W,4k]); spatial dims preserved."""
        mid = self.act.forward(self.conv.forward(features))
        return self.cls.forward(mid), self.reg.forward(mid)

    def backward(self, grad_logits: np.ndarray, grad_deltas: np.ndarray) -> np.ndarray:
        g_mid = self.cls.backward(grad_logits) + self.reg.backward(grad_deltas)
        return self.conv.backward(self.act.backward(g_mid))

    def params(self) -> list[Param]:
        return self.conv.params() + self.cls.params() + self.reg.params()

    def per_anchor(self, logits: np.ndarray, deltas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Reshape head maps to [A,2] logits and [A,4] deltas in grid order."""
        h, w = logits.shape[:2]
        return logits.reshape(h * w * self.k, 2), deltas.reshape(h * w * self.k, 4)

    def to_maps(self, per_logits: np.ndarray, per_deltas: np.ndarray, h: int, w: int):
        return per_logits.reshape(h, w, 2 * self.k), per_deltas.reshape(h, w, 4 * self.k)


def objectness_probs(per_anchor_logits: np.ndarray) -> np.ndarray:
    """P(object) per anchor from the (background, object) logit pair."""
    diff = per_anchor_logits[:, 1] - per_anchor_logits[:, 0]
    out = np.empty_like(diff)
    pos = diff >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-diff[pos]))
    e = np.exp(diff[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def generate_proposals(
    scores: np.ndarray,
    deltas: np.ndarray,
    grid: AnchorGrid,
    image_w: float,
    image_h: float,
    cfg: DetectorConfig,
    post_nms_top_n: int,
) -> list[Proposal]:
    """Decode every anchor, clip to the image, drop slivers under 1 px,
    keep the best pre_nms_top_n, suppress, keep post_nms_top_n."""
    scores = np.asarray(scores, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    if scores.shape[0] != len(grid) or deltas.shape != (len(grid), 4):
        raise ValueError(
            f"head outputs ({scores.shape[0]} scores, {deltas.shape} deltas) "
            f"do not match the {len(grid)}-anchor grid"
        )
    boxes = decode_deltas(grid.boxes, deltas)
    boxes[:, 0::2] = np.clip(boxes[:, 0::2], 0.0, image_w)
    boxes[:, 1::2] = np.clip(boxes[:, 1::2], 0.0, image_h)
    keep = (boxes[:, 2] - boxes[:, 0] >= 1.0) & (boxes[:, 3] - boxes[:, 1] >= 1.0)
    idx = np.nonzero(keep)[0]
    if idx.size == 0:
        return []
    order = idx[np.argsort(-scores[idx], kind="stable")][: cfg.pre_nms_top_n]
    cands = [
        ScoredBox(
            box=Box2D(*(float(v) for v in boxes[i])),
            score=float(scores[i]),
            class_id=0,
            source_index=int(i),
        )
        for i in order
    ]
    kept = greedy_nms(cands, cfg.rpn_nms_thresh)[:post_nms_top_n]
    return [Proposal(box=s.box, objectness=s.score) for s in kept]
