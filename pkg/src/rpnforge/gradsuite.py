"""The full finite-difference verification suite.

Runs every differentiable operation, the composed heads, and the end-to-end
joint loss against central differences over a set of random seeds. Per-op
tolerance is 1e-6; the deep end-to-end composite gets 1e-5. Inputs are drawn
away from the relu/|d|=1 kinks so the checks probe smooth neighborhoods.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector.config import DetectorConfig
from .detector.model import Detector, build_train_plan, joint_loss
from .detector.roi import roi_pool, roi_pool_backward
from .geometry import Box2D
from .nn.core import Param, zero_grads
from .nn.gradcheck import check_param_gradients, finite_difference_check, max_rel_error
from .nn.layers import Activation, BatchNorm, Conv2d, Dropout, Linear, MaxPool2x2, ResidualBlock
from .nn.losses import smooth_l1, softmax_cross_entropy

PER_OP_TOL = 1e-6
END_TO_END_TOL = 1e-5


@dataclass(frozen=True)
class GradCheckRecord:
    name: str
    max_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_err < self.tol


def _kink_free(rng: np.random.Generator, shape) -> np.ndarray:
    """Values with |x| in [0.25, 1.5]: safely away from the relu kink."""
    mag = rng.uniform(0.25, 1.5, size=shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return mag * sign


def _projection_check(layer_forward, layer_backward, x, proj, eps=1e-5) -> float:
    """Input-gradient check of a tensor-valued op through a fixed projection."""

    def func(xv):
        y = layer_forward(xv)
        return float((proj * y).sum()), layer_backward(proj)

    return finite_difference_check(func, x, eps)


def _layer_param_check(layer, forward, x, proj, params) -> float:
    def loss():
        return float((proj * forward(x)).sum())

    def backward():
        forward(x)
        layer.backward(proj)

    errs = check_param_gradients(loss, backward, params)
    return max(errs.values()) if errs else 0.0


def _check_conv(rng) -> list[GradCheckRecord]:
    out = []
    for name, k, stride, pad in (("conv2d_3x3", 3, 1, 1), ("conv2d_5x5_s2", 5, 2, 0), ("conv1x1", 1, 1, 0)):
        layer = Conv2d(k, 2, 3, stride=stride, pad=pad, rng=rng, name=name)
        x = _kink_free(rng, (6, 6, 2))
        proj = rng.standard_normal(layer.forward(x).shape)
        err_x = _projection_check(layer.forward, layer.backward, x, proj)
        err_p = _layer_param_check(layer, layer.forward, x, proj, layer.params())
        out.append(GradCheckRecord(name, max(err_x, err_p), PER_OP_TOL))
    return out


def _check_pool(rng) -> list[GradCheckRecord]:
    layer = MaxPool2x2()
    x = _kink_free(rng, (6, 6, 3)) + rng.standard_normal((6, 6, 3)) * 1e-3
    proj = rng.standard_normal((3, 3, 3))
    err = _projection_check(layer.forward, layer.backward, x, proj)
    return [GradCheckRecord("max_pool2x2", err, PER_OP_TOL)]


def _check_activations(rng) -> list[GradCheckRecord]:
    out = []
    for kind in Activation.KINDS:
        layer = Activation(kind)
        x = _kink_free(rng, (4, 5))
        proj = rng.standard_normal((4, 5))
        err = _projection_check(layer.forward, layer.backward, x, proj)
        out.append(GradCheckRecord(f"activation_{kind}", err, PER_OP_TOL))
    return out


def _check_linear(rng) -> list[GradCheckRecord]:
    layer = Linear(6, 4, rng=rng, name="fc")
    x = _kink_free(rng, (6,))
    proj = rng.standard_normal(4)
    err_x = _projection_check(layer.forward, layer.backward, x, proj)
    err_p = _layer_param_check(layer, layer.forward, x, proj, layer.params())
    return [GradCheckRecord("fully_connected", max(err_x, err_p), PER_OP_TOL)]


def _check_batch_norm(rng) -> list[GradCheckRecord]:
    out = []
    for mode in ("train", "eval"):
        layer = BatchNorm(3, name="bn")
        layer.running_mean = rng.standard_normal(3) * 0.1
        layer.running_var = rng.uniform(0.5, 1.5, 3)
        x = rng.standard_normal((5, 3))
        proj = rng.standard_normal((5, 3))
        train = mode == "train"
        err_x = _projection_check(
            lambda v: layer.forward(v, train), layer.backward, x, proj
        )
        err_p = _layer_param_check(
            layer, lambda v: layer.forward(v, train), x, proj, layer.params()
        )
        out.append(GradCheckRecord(f"batch_norm_{mode}", max(err_x, err_p), PER_OP_TOL))
    return out


def _check_dropout(rng) -> list[GradCheckRecord]:
    layer = Dropout(0.4)
    x = _kink_free(rng, (5, 4))
    proj = rng.standard_normal((5, 4))
    seed = int(rng.integers(0, 2**32))

    def forward(v):
        return layer.forward(v, train=True, rng=np.random.default_rng(seed))

    err = _projection_check(forward, layer.backward, x, proj)
    return [GradCheckRecord("dropout_train", err, PER_OP_TOL)]


def _check_residual(rng) -> list[GradCheckRecord]:
    out = []
    for variant in ResidualBlock.VARIANTS:
        for use_bn in (False, True):
            layer = ResidualBlock(2, variant, rng=rng, use_batch_norm=use_bn, name="block")
            x = _kink_free(rng, (4, 4, 2))
            proj = rng.standard_normal((4, 4, 2))
            fwd = lambda v: layer.forward(v, train=True)
            err_x = _projection_check(fwd, layer.backward, x, proj)
            err_p = _layer_param_check(layer, fwd, x, proj, layer.params())
            suffix = "_bn" if use_bn else ""
            out.append(
                GradCheckRecord(f"residual_{variant}{suffix}", max(err_x, err_p), PER_OP_TOL)
            )
    return out


def _check_losses(rng) -> list[GradCheckRecord]:
    logits = rng.standard_normal(5)
    target = int(rng.integers(0, 5))
    err_ce = finite_difference_check(lambda z: softmax_cross_entropy(z, target), logits)

    pred = _kink_free(rng, (6,)) * 1.8  # spans both smooth-l1 branches
    targ = np.zeros(6)
    # keep |d| away from the branch boundary at 1
    pred = np.where(np.abs(np.abs(pred) - 1.0) < 0.05, pred * 1.2, pred)
    err_sl1 = finite_difference_check(lambda v: smooth_l1(v, targ), pred)
    return [
        GradCheckRecord("softmax_cross_entropy", err_ce, PER_OP_TOL),
        GradCheckRecord("smooth_l1", err_sl1, PER_OP_TOL),
    ]


def _check_roi_pool(rng) -> list[GradCheckRecord]:
    feat_shape = (6, 8, 2)
    x1 = float(rng.uniform(0, 40))
    y1 = float(rng.uniform(0, 30))
    roi = Box2D(x1, y1, x1 + float(rng.uniform(20, 60)), y1 + float(rng.uniform(16, 40)))
    proj = rng.standard_normal((3, 3, 2))

    def func(feat):
        pooled, argmax = roi_pool(feat, roi, 16, (3, 3))
        grad = roi_pool_backward(proj, argmax, feat_shape)
        return float((proj * pooled).sum()), grad

    x = _kink_free(rng, feat_shape) + rng.standard_normal(feat_shape) * 1e-3
    err = finite_difference_check(func, x)
    return [GradCheckRecord("roi_pool", err, PER_OP_TOL)]


def _tiny_config(pattern: str = "residual_identity") -> DetectorConfig:
    return DetectorConfig(
        pattern=pattern,
        widths=(4, 6),
        depth=1,
        stride=4,
        anchor_variant="extended",
        rpn_channels=6,
        roi_pool_h=3,
        roi_pool_w=3,
        fc_dim=8,
        dropout=0.3,
        rois_per_image=8,
        pre_nms_top_n=50,
        post_nms_top_n_train=10,
        post_nms_top_n_infer=10,
    )


def _check_heads(rng) -> list[GradCheckRecord]:
    """Extractor, proposal head, and prediction head as composites."""
    cfg = _tiny_config()
    model = Detector(cfg, rng)
    out = []

    x = _kink_free(rng, (16, 16, 3))
    feat = model.extractor.forward(x, train=True)
    proj = rng.standard_normal(feat.shape)
    err = _projection_check(
        lambda v: model.extractor.forward(v, train=True), model.extractor.backward, x, proj
    )
    out.append(GradCheckRecord("feature_extractor", err, PER_OP_TOL))

    pl = rng.standard_normal(model.rpn.forward(feat)[0].shape)
    pd = rng.standard_normal(model.rpn.forward(feat)[1].shape)

    def rpn_fwd(v):
        lo, de = model.rpn.forward(v)
        return float((pl * lo).sum() + (pd * de).sum()), model.rpn.backward(pl, pd)

    out.append(GradCheckRecord("rpn_head", finite_difference_check(rpn_fwd, feat), PER_OP_TOL))

    pooled = _kink_free(rng, (3, cfg.roi_pool_h, cfg.roi_pool_w, model.extractor.out_channels))
    seed = int(rng.integers(0, 2**32))
    probs0, deltas0 = model.head.forward(pooled, train=True, rng=np.random.default_rng(seed))
    pp = rng.standard_normal(probs0.shape)
    pr = rng.standard_normal(deltas0.shape)

    def head_fwd(v):
        probs, deltas = model.head.forward(v, train=True, rng=np.random.default_rng(seed))
        # project the softmax probabilities: fold the softmax jacobian into
        # the logits gradient (dL/dlogits = (diag(p) - p p^T) @ dL/dp)
        grad_logits = probs * (pp - (pp * probs).sum(axis=1, keepdims=True))
        loss = float((pp * probs).sum() + (pr * deltas).sum())
        return loss, model.head.backward(grad_logits, pr)

    out.append(
        GradCheckRecord("prediction_head", finite_difference_check(head_fwd, pooled), PER_OP_TOL)
    )
    return out


def _check_end_to_end(rng, coords_per_param: int = 2) -> list[GradCheckRecord]:
    """Joint loss on a small synthetic scene, checked on sampled coordinates."""
    cfg = _tiny_config()
    model = Detector(cfg, rng)
    image = _kink_free(rng, (32, 32, 3))
    gts = [
        (Box2D(4.0, 6.0, 18.0, 20.0), 1),
        (Box2D(20.0, 18.0, 30.0, 30.0), 1),
    ]
    feat = model.extractor.forward(image, train=True)
    logits_map, deltas_map = model.rpn.forward(feat)
    plan = build_train_plan(model, logits_map, deltas_map, gts, 32.0, 32.0, rng)

    def loss():
        return joint_loss(model, image, gts, plan, run_backward=False, train=True).total

    def backward():
        joint_loss(model, image, gts, plan, run_backward=True, train=True)

    errs = check_param_gradients(
        loss, backward, model.params(), coords_per_param=coords_per_param, rng=rng
    )
    worst = max(errs.values())
    return [GradCheckRecord("detector_end_to_end", worst, END_TO_END_TOL)]


def run_gradient_suite(seeds: int = 10, end_to_end_seeds: int | None = None) -> list[GradCheckRecord]:
    """Every check across `seeds` seeds; records carry the worst error seen."""
    if end_to_end_seeds is None:
        end_to_end_seeds = seeds
    worst: dict[str, GradCheckRecord] = {}

    def absorb(records):
        for r in records:
            prev = worst.get(r.name)
            if prev is None or r.max_err > prev.max_err:
                worst[r.name] = r

    for seed in range(seeds):
        rng = np.random.default_rng(1000 + seed)
        absorb(_check_conv(rng))
        absorb(_check_pool(rng))
        absorb(_check_activations(rng))
        absorb(_check_linear(rng))
        absorb(_check_batch_norm(rng))
        absorb(_check_dropout(rng))
        absorb(_check_residual(rng))
        absorb(_check_losses(rng))
        absorb(_check_roi_pool(rng))
        absorb(_check_heads(rng))
    for seed in range(end_to_end_seeds):
        rng = np.random.default_rng(5000 + seed)
        absorb(_check_end_to_end(rng))
    return list(worst.values())
