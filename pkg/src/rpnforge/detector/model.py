"""The assembled two-stage detector: shared features, proposal head,
prediction head, joint training step, and full inference.

Training runs one shared extractor pass per step; both stages' losses are
computed from it and a single backward accumulates their gradients before
the SGD update. The (anchor sample, roi sample, dropout seed) triple forms a
"plan" that fixes every stochastic choice, which keeps the joint loss a
deterministic function of the parameters for gradient verification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..anchors import AnchorGrid, AnchorLabel, generate_anchors, label_anchors, sample_minibatch
from ..geometry import Box2D, BoxDelta, clip_box, decode_box, encode_box, scale_box
from ..nms import ScoredBox, per_class_nms
from ..nn.core import Param
from ..nn.losses import smooth_l1, softmax_cross_entropy
from ..nn.optim import sgd_step
from .config import DetectorConfig
from .extractor import FeatureExtractor
from .head import PredictionHead
from .roi import RoiSample, roi_pool, roi_pool_backward, sample_rois
from .rpn import RpnHead, generate_proposals, objectness_probs


class Detector:
    def __init__(self, cfg: DetectorConfig, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng()
        self.cfg = cfg
        self.anchor_spec = cfg.anchor_spec()
        self.extractor = FeatureExtractor(cfg, rng)
        self.rpn = RpnHead(self.extractor.out_channels, cfg, rng)
        self.head = PredictionHead(self.extractor.out_channels, cfg, rng)
        self._grids: dict[tuple[int, int], AnchorGrid] = {}

    def params(self) -> list[Param]:
        return self.extractor.params() + self.rpn.params() + self.head.params()

    def param_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.value for p in self.params()}

    def load_param_dict(self, values: dict[str, np.ndarray]) -> None:
        own = {p.name: p for p in self.params()}
        missing = sorted(set(own) - set(values))
        extra = sorted(set(values) - set(own))
        if missing or extra:
            raise ValueError(
                f"checkpoint does not match model (missing {missing}, unexpected {extra})"
            )
        for name, p in own.items():
            arr = values[name]
            if arr.shape != p.value.shape:
                raise ValueError(
                    f"parameter {name!r} has shape {arr.shape}, expected {p.value.shape}"
                )
            p.value[...] = arr

    def anchor_grid(self, feat_h: int, feat_w: int) -> AnchorGrid:
        key = (feat_h, feat_w)
        if key not in self._grids:
            self._grids[key] = generate_anchors(self.anchor_spec, feat_h, feat_w)
        return self._grids[key]


@dataclass
class RpnLossResult:
    total: float
    cls: float
    reg: float
    grad_logits: np.ndarray  # [A, 2]
    grad_deltas: np.ndarray  # [A, 4]


def rpn_loss(
    logits: np.ndarray,
    deltas: np.ndarray,
    labels: list[AnchorLabel],
    sampled: list[int],
    grid: AnchorGrid,
    gts: list[Box2D],
    cfg: DetectorConfig,
) -> RpnLossResult:
    """Proposal-stage loss over the sampled anchors.

    Classification averages cross-entropy over the sample; regression is the
    smooth-L1 sum over the sample's positives, gated off entirely when none
    exist, weighted by loss_lambda and normalized by the location count.
    """
    if not sampled:
        raise ValueError("empty anchor sample")
    n_cls = len(sampled)
    n_reg = grid.feat_h * grid.feat_w
    lam = cfg.loss_lambda

    grad_logits = np.zeros_like(logits)
    grad_deltas = np.zeros_like(deltas)
    l_cls = 0.0
    l_reg = 0.0
    for i in sampled:
        lab = labels[i]
        if not (lab.is_positive or lab.is_negative):
            raise ValueError(f"sampled anchor {i} is neither positive nor negative")
        target = 1 if lab.is_positive else 0
        loss_i, g = softmax_cross_entropy(logits[i], target)
        l_cls += loss_i
        grad_logits[i] = g / n_cls
        if lab.is_positive:
            d = encode_box(grid.anchor(i), gts[lab.gt_index])
            t = np.array([d.tx, d.ty, d.tw, d.th])
            loss_r, gr = smooth_l1(deltas[i], t)
            l_reg += loss_r
            grad_deltas[i] = lam * gr / n_reg
    l_cls /= n_cls
    l_reg = lam * l_reg / n_reg
    return RpnLossResult(l_cls + l_reg, l_cls, l_reg, grad_logits, grad_deltas)


@dataclass
class DetectionLossResult:
    total: float
    cls: float
    reg: float
    grad_logits: np.ndarray  # [K]
    grad_deltas: np.ndarray  # [K, 4]


def detection_loss(
    class_probs: np.ndarray,
    deltas: np.ndarray,
    target_class: int,
    target_delta: np.ndarray | None,
    cfg: DetectorConfig,
) -> DetectionLossResult:
    """Prediction-stage loss for one region: -log p_u plus, for foreground,
    lambda-weighted smooth-L1 on the true class's four delta outputs."""
    k = class_probs.shape[0]
    if not 0 <= target_class < k:
        raise ValueError(f"target class {target_class} out of range [0,{k})")
    grad_logits = class_probs.copy()
    grad_logits[target_class] -= 1.0
    l_cls = float(-np.log(max(class_probs[target_class], 1e-300)))
    grad_deltas = np.zeros_like(deltas)
    l_reg = 0.0
    if target_class >= 1:
        if target_delta is None:
            raise ValueError(f"foreground class {target_class} lacks a regression target")
        loss_r, gr = smooth_l1(deltas[target_class], np.asarray(target_delta))
        l_reg = cfg.loss_lambda * loss_r
        grad_deltas[target_class] = cfg.loss_lambda * gr
    return DetectionLossResult(l_cls + l_reg, l_cls, l_reg, grad_logits, grad_deltas)


@dataclass
class TrainPlan:
    """Every stochastic choice of one training step, frozen."""

    grid: AnchorGrid
    labels: list[AnchorLabel]
    sampled: list[int]
    rois: list[RoiSample]
    dropout_seed: int


@dataclass
class StepStats:
    rpn_cls: float
    rpn_reg: float
    det_cls: float
    det_reg: float

    @property
    def total(self) -> float:
        return self.rpn_cls + self.rpn_reg + self.det_cls + self.det_reg


def build_train_plan(
    model: Detector,
    logits_map: np.ndarray,
    deltas_map: np.ndarray,
    gts: list[tuple[Box2D, int]],
    image_w: float,
    image_h: float,
    rng: np.random.Generator,
) -> TrainPlan:
    """Fix the anchor sample and roi sample from one RPN forward pass."""
    cfg = model.cfg
    feat_h, feat_w = logits_map.shape[:2]
    grid = model.anchor_grid(feat_h, feat_w)
    gt_boxes = [b for b, _ in gts]
    labels = label_anchors(grid, gt_boxes, cfg.rpn_pos_thresh, cfg.rpn_neg_thresh)
    sampled = sample_minibatch(labels, cfg.rpn_batch, rng)

    per_logits, per_deltas = model.rpn.per_anchor(logits_map, deltas_map)
    proposals = generate_proposals(
        objectness_probs(per_logits),
        per_deltas,
        grid,
        image_w,
        image_h,
        cfg,
        cfg.post_nms_top_n_train,
    )
    rois = sample_rois([p.box for p in proposals], gts, cfg, rng)
    return TrainPlan(
        grid=grid,
        labels=labels,
        sampled=sampled,
        rois=rois,
        dropout_seed=int(rng.integers(0, 2**63 - 1)),
    )


def _stage_losses(
    model: Detector,
    feat: np.ndarray,
    logits_map: np.ndarray,
    deltas_map: np.ndarray,
    gts: list[tuple[Box2D, int]],
    plan: TrainPlan,
    train: bool,
    run_backward: bool,
) -> StepStats:
    """Both stages' losses from one shared forward; optional joint backward."""
    cfg = model.cfg
    per_logits, per_deltas = model.rpn.per_anchor(logits_map, deltas_map)
    gt_boxes = [b for b, _ in gts]
    rpn_res = rpn_loss(per_logits, per_deltas, plan.labels, plan.sampled, plan.grid, gt_boxes, cfg)

    pooled_list = []
    argmax_list = []
    for roi in plan.rois:
        pooled, argmax = roi_pool(feat, roi.box, cfg.stride, (cfg.roi_pool_h, cfg.roi_pool_w))
        pooled_list.append(pooled)
        argmax_list.append(argmax)

    det_cls = det_reg = 0.0
    grad_logits = grad_deltas = None
    if pooled_list:
        pooled_batch = np.stack(pooled_list)
        drop_rng = np.random.default_rng(plan.dropout_seed)
        probs, pred_deltas = model.head.forward(pooled_batch, train=train, rng=drop_rng)
        n = len(plan.rois)
        grad_logits = np.zeros_like(probs)
        grad_deltas = np.zeros_like(pred_deltas)
        for j, roi in enumerate(plan.rois):
            res = detection_loss(probs[j], pred_deltas[j], roi.target_class, roi.target_delta, cfg)
            det_cls += res.cls / n
            det_reg += res.reg / n
            grad_logits[j] = res.grad_logits / n
            grad_deltas[j] = res.grad_deltas / n

    stats = StepStats(rpn_res.cls, rpn_res.reg, det_cls, det_reg)
    if not run_backward:
        return stats

    grad_feat = np.zeros_like(feat)
    if pooled_list:
        grad_pooled = model.head.backward(grad_logits, grad_deltas)
        for j in range(len(plan.rois)):
            roi_pool_backward(grad_pooled[j], argmax_list[j], feat.shape, grad_feat)
    gl_map, gd_map = model.rpn.to_maps(
        rpn_res.grad_logits, rpn_res.grad_deltas, feat.shape[0], feat.shape[1]
    )
    grad_feat += model.rpn.backward(gl_map, gd_map)
    model.extractor.backward(grad_feat)
    return stats


def joint_loss(
    model: Detector,
    image: np.ndarray,
    gts: list[tuple[Box2D, int]],
    plan: TrainPlan,
    run_backward: bool = False,
    train: bool = True,
) -> StepStats:
    """Evaluate (and optionally backpropagate) the joint loss under a fixed
    plan. Used by the gradient harness; runs its own extractor forward."""
    image = np.asarray(image, dtype=np.float64)
    feat = model.extractor.forward(image, train=train)
    logits_map, deltas_map = model.rpn.forward(feat)
    return _stage_losses(model, feat, logits_map, deltas_map, gts, plan, train, run_backward)


def train_step(
    model: Detector,
    image: np.ndarray,
    gts: list[tuple[Box2D, int]],
    rng: np.random.Generator,
    lr: float,
    momentum: float = 0.0,
    weight_decay: float = 0.0,
    frozen: tuple[str, ...] = (),
) -> StepStats:
    """One joint update: shared forward, both losses, one backward, SGD.

    `frozen` lists parameter-name prefixes excluded from the update.
    Deterministic for a given rng state.
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]

    feat = model.extractor.forward(image, train=True)
    logits_map, deltas_map = model.rpn.forward(feat)
    plan = build_train_plan(model, logits_map, deltas_map, gts, float(w), float(h), rng)
    stats = _stage_losses(model, feat, logits_map, deltas_map, gts, plan, True, True)

    if not np.isfinite(stats.total):
        raise ValueError(
            f"non-finite training loss (rpn_cls={stats.rpn_cls}, rpn_reg={stats.rpn_reg}, "
            f"det_cls={stats.det_cls}, det_reg={stats.det_reg})"
        )

    params = model.params()
    if frozen:
        for p in params:
            if any(p.name.startswith(prefix) for prefix in frozen):
                p.zero_grad()
    sgd_step(params, lr, momentum=momentum, weight_decay=weight_decay)
    return stats


def detect(
    model: Detector,
    image: np.ndarray,
    score_thresh: float | None = None,
    sigma: float = 1.0,
    valid_size: tuple[float, float] | None = None,
) -> list[ScoredBox]:
    """Full inference on a preprocessed (and padded) image.

    valid_size gives the unpadded (width, height); boxes are clipped to it
    and rescaled by sigma back to original image coordinates.
    """
    cfg = model.cfg
    thresh = cfg.score_thresh if score_thresh is None else score_thresh
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    vw, vh = valid_size if valid_size is not None else (float(w), float(h))

    feat = model.extractor.forward(image, train=False)
    logits_map, deltas_map = model.rpn.forward(feat)
    per_logits, per_deltas = model.rpn.per_anchor(logits_map, deltas_map)
    grid = model.anchor_grid(feat.shape[0], feat.shape[1])
    proposals = generate_proposals(
        objectness_probs(per_logits), per_deltas, grid, vw, vh, cfg, cfg.post_nms_top_n_infer
    )
    if not proposals:
        return []

    pooled_batch = np.stack(
        [
            roi_pool(feat, p.box, cfg.stride, (cfg.roi_pool_h, cfg.roi_pool_w))[0]
            for p in proposals
        ]
    )
    probs, pred_deltas = model.head.forward(pooled_batch, train=False)

    candidates: list[ScoredBox] = []
    for j, p in enumerate(proposals):
        for c in range(1, cfg.num_classes):
            score = float(probs[j, c])
            if score < thresh:
                continue
            d = pred_deltas[j, c]
            try:
                box = decode_box(p.box, BoxDelta(float(d[0]), float(d[1]), float(d[2]), float(d[3])))
            except ValueError:
                continue  # runaway delta from an untrained head
            box = clip_box(box, vw, vh)
            if box.width < 1.0 or box.height < 1.0:
                continue
            box = scale_box(box, 1.0 / sigma)
            candidates.append(
                ScoredBox(box=box, score=score, class_id=c, source_index=len(candidates))
            )
    return per_class_nms(candidates, cfg.final_nms_thresh)
