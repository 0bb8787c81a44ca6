"""Dataset-level orchestration shared by the command line and tests:
manifest loading, sample preparation, the training loop, and batch detection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .detector.config import DetectorConfig
from .detector.model import Detector, StepStats, detect, train_step
from .geometry import Box2D, scale_box
from .kitti.labels import KittiLabel, parse_label_file
from .kitti.ppm import load_ppm
from .kitti.preprocess import pad_to_multiple, preprocess_image
from .nn.checkpoint import save_checkpoint

log = logging.getLogger("rpnforge")

LOSS_LOG_HEADER = "step,total,rpn_cls,rpn_reg,det_cls,det_reg"


@dataclass
class Sample:
    stem: str
    image: np.ndarray  # uint8 [H, W, 3]
    labels: list[KittiLabel]


def load_dataset(data_dir: str | Path) -> list[Sample]:
    """Read every stem named by dataset.txt from images/ and labels/."""
    root = Path(data_dir)
    manifest = root / "dataset.txt"
    if not manifest.is_file():
        raise ValueError(f"no dataset manifest at {manifest}")
    samples = []
    for stem in manifest.read_text().split():
        image = load_ppm((root / "images" / f"{stem}.ppm").read_bytes())
        label_path = root / "labels" / f"{stem}.txt"
        labels = parse_label_file(label_path.read_text()) if label_path.is_file() else []
        samples.append(Sample(stem=stem, image=image, labels=labels))
    return samples


@dataclass
class PreparedSample:
    stem: str
    tensor: np.ndarray  # float64, zero-mean, padded to the stride
    gts: list[tuple[Box2D, int]]  # boxes in network coordinates
    sigma: float
    valid_size: tuple[float, float]  # unpadded (width, height)


def prepare_sample(sample: Sample, cfg: DetectorConfig) -> PreparedSample:
    tensor, sigma = preprocess_image(sample.image)
    vh, vw = tensor.shape[:2]
    tensor = pad_to_multiple(tensor, cfg.stride)
    class_ids = {name: i for i, name in enumerate(cfg.classes)}
    gts = []
    for label in sample.labels:
        cid = class_ids.get(label.category)
        if cid is None or cid == 0:
            continue
        box = scale_box(label.bbox, sigma)
        if box.width > 0 and box.height > 0:
            gts.append((box, cid))
    return PreparedSample(
        stem=sample.stem,
        tensor=tensor,
        gts=gts,
        sigma=sigma,
        valid_size=(float(vw), float(vh)),
    )


@dataclass
class TrainSettings:
    steps: int = 500
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0
    freeze: tuple[str, ...] = ()
    log_every: int = 50


def train_over_dataset(
    model: Detector,
    samples: list[Sample],
    train_cfg: TrainSettings,
    rng: np.random.Generator,
) -> tuple[list[str], bytes]:
    """Cycle the manifest for the configured number of steps.

    Returns (loss log lines, checkpoint bytes). A non-finite loss aborts,
    returning the parameters from just before the failing step.
    """
    if not samples:
        raise ValueError("training dataset is empty")
    prepared = [prepare_sample(s, model.cfg) for s in samples]
    trainable = [p for p in prepared if p.gts]
    if not trainable:
        raise ValueError("no training image carries a usable ground-truth box")

    rows = [LOSS_LOG_HEADER]
    for step in range(train_cfg.steps):
        item = trainable[step % len(trainable)]
        snapshot = {k: v.copy() for k, v in model.param_dict().items()}
        try:
            stats = train_step(
                model,
                item.tensor,
                item.gts,
                rng,
                lr=train_cfg.lr,
                momentum=train_cfg.momentum,
                weight_decay=train_cfg.weight_decay,
                frozen=train_cfg.freeze,
            )
        except ValueError as e:
            log.error("aborting training at step %d: %s", step, e)
            return rows, save_checkpoint(snapshot)
        rows.append(
            f"{step},{stats.total:.6f},{stats.rpn_cls:.6f},{stats.rpn_reg:.6f},"
            f"{stats.det_cls:.6f},{stats.det_reg:.6f}"
        )
        if train_cfg.log_every and step % train_cfg.log_every == 0:
            log.info("step %d loss %.4f", step, stats.total)
    return rows, save_checkpoint(model.param_dict())


def detect_image(
    model: Detector,
    image: np.ndarray,
    score_thresh: float | None = None,
) -> list[KittiLabel]:
    """Preprocess, pad, run the detector, and map back to label records in
    original image coordinates."""
    cfg = model.cfg
    tensor, sigma = preprocess_image(image)
    vh, vw = tensor.shape[:2]
    tensor = pad_to_multiple(tensor, cfg.stride)
    found = detect(model, tensor, score_thresh=score_thresh, sigma=sigma, valid_size=(vw, vh))
    out = []
    for s in found:
        out.append(
            KittiLabel(
                category=cfg.classes[s.class_id],
                truncation=0.0,
                occlusion=0,
                alpha=0.0,
                bbox=s.box,
                score=s.score,
            )
        )
    return out
