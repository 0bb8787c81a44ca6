"""Shared feature extractor: stem convolution plus pooled block stages.

Spatial reduction is exactly the configured stride (one 2x2 pool per stage).
Block pattern is plain conv, post-activation residual, or pre-activation
(identity shortcut) residual; the two residual patterns share parameter
shapes so checkpoints are interchangeable between them.
"""

from __future__ import annotations

import numpy as np

from ..nn.core import Param
from ..nn.layers import Activation, Conv2d, MaxPool2x2, ResidualBlock
from .config import DetectorConfig


class _PlainBlock:
    """Single 3x3 conv + relu, the no-skip baseline block."""

    def __init__(self, channels: int, rng, name: str):
        self.conv = Conv2d(3, channels, channels, pad=1, rng=rng, name=f"{name}.conv")
        self.act = Activation("relu")

    def forward(self, x, train):
        return self.act.forward(self.conv.forward(x))

    def backward(self, g):
        return self.conv.backward(self.act.backward(g))

    def params(self):
        return self.conv.params()


class FeatureExtractor:
    """Stack: stem conv/relu/pool, one block+pool per further stage, then
    `depth` blocks at the final width. Counts its forward invocations so the
    training loop's single-shared-pass contract is checkable."""

    def __init__(self, cfg: DetectorConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.stride = cfg.stride
        widths = cfg.stage_widths
        self.out_channels = widths[-1]
        self.forward_count = 0

        self._layers: list[tuple[str, object]] = []
        self._layers.append(("stem", Conv2d(3, 3, widths[0], pad=1, rng=rng, name="extractor.stem")))
        self._layers.append(("act", Activation("relu")))
        self._layers.append(("pool", MaxPool2x2()))
        for i in range(1, len(widths)):
            if widths[i] != widths[i - 1]:
                self._layers.append(
                    (
                        "trans",
                        Conv2d(1, widths[i - 1], widths[i], rng=rng, name=f"extractor.trans{i}"),
                    )
                )
                self._layers.append(("act", Activation("relu")))
            self._layers.append(("block", self._make_block(widths[i], rng, f"extractor.stage{i}")))
            self._layers.append(("pool", MaxPool2x2()))
        for j in range(cfg.depth):
            self._layers.append(
                ("block", self._make_block(widths[-1], rng, f"extractor.top{j}"))
            )
        if cfg.pattern == "residual_identity":
            # pre-activation blocks leave raw sums; normalize the interface
            self._layers.append(("act", Activation("relu")))

    def _make_block(self, channels: int, rng, name: str):
        if self.cfg.pattern == "plain":
            return _PlainBlock(channels, rng, name)
        variant = "original" if self.cfg.pattern == "residual_original" else "identity"
        return ResidualBlock(
            channels, variant, rng=rng, use_batch_norm=self.cfg.batch_norm, name=name
        )

    def forward(self, image: np.ndarray, train: bool = True) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        h, w = image.shape[:2]
        if h % self.stride or w % self.stride:
            raise ValueError(
                f"input {h}x{w} not divisible by stride {self.stride}; pad the image first"
            )
        self.forward_count += 1
        x = image
        for kind, layer in self._layers:
            if kind == "block":
                x = layer.forward(x, train)
            else:
                x = layer.forward(x)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        g = grad
        for kind, layer in reversed(self._layers):
            g = layer.backward(g)
        return g

    def params(self) -> list[Param]:
        out: list[Param] = []
        for _, layer in self._layers:
            out.extend(layer.params())
        return out
