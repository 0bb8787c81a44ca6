"""Prediction stage: pooled regions through two fully-connected layers into
softmax class probabilities and per-class box deltas."""

from __future__ import annotations

import numpy as np

from ..nn.core import Param
from ..nn.layers import Dropout, Linear
from ..nn.losses import softmax
from .config import DetectorConfig


class PredictionHead:
    def __init__(self, in_channels: int, cfg: DetectorConfig, rng: np.random.Generator):
        flat = cfg.roi_pool_h * cfg.roi_pool_w * in_channels
        k = cfg.num_classes
        self.num_classes = k
        self.fc1 = Linear(flat, cfg.fc_dim, rng=rng, name="head.fc1")
        self.fc2 = Linear(cfg.fc_dim, cfg.fc_dim, rng=rng, name="head.fc2")
        self.drop1 = Dropout(cfg.dropout)
        self.drop2 = Dropout(cfg.dropout)
        self.cls = Linear(cfg.fc_dim, k, rng=rng, name="head.cls")
        self.reg = Linear(cfg.fc_dim, 4 * k, rng=rng, name="head.reg")
        self._cache = None

    def forward(
        self,
        pooled: np.ndarray,
        train: bool = True,
        rng: np.random.Generator | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """pooled [N, h, w, C] -> (class probabilities [N, K], deltas [N, K, 4])."""
        n = pooled.shape[0]
        x = pooled.reshape(n, -1)
        h1 = self.fc1.forward(x)
        m1 = h1 > 0.0
        d1 = self.drop1.forward(np.maximum(h1, 0.0), train, rng)
        h2 = self.fc2.forward(d1)
        m2 = h2 > 0.0
        d2 = self.drop2.forward(np.maximum(h2, 0.0), train, rng)
        logits = self.cls.forward(d2)
        regs = self.reg.forward(d2)
        self._cache = (pooled.shape, m1, m2)
        return softmax(logits), regs.reshape(n, self.num_classes, 4)

    def backward(self, grad_logits: np.ndarray, grad_regs: np.ndarray) -> np.ndarray:
        """Gradients wrt class logits [N, K] and deltas [N, K, 4] -> wrt pooled."""
        pooled_shape, m1, m2 = self._cache
        n = pooled_shape[0]
        g2 = self.cls.backward(grad_logits) + self.reg.backward(grad_regs.reshape(n, -1))
        g2 = self.drop2.backward(g2) * m2
        g1 = self.fc2.backward(g2)
        g1 = self.drop1.backward(g1) * m1
        return self.fc1.backward(g1).reshape(pooled_shape)

    def params(self) -> list[Param]:
        return (
            self.fc1.params() + self.fc2.params() + self.cls.params() + self.reg.params()
        )
