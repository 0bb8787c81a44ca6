from .config import DetectorConfig
from .extractor import FeatureExtractor
from .rpn import Proposal, RpnHead, generate_proposals
from .roi import RoiSample, roi_pool, roi_pool_backward, sample_rois
from .head import PredictionHead
from .model import (
    Detector,
    StepStats,
    TrainPlan,
    build_train_plan,
    detect,
    detection_loss,
    joint_loss,
    rpn_loss,
    train_step,
)

__all__ = [
    "DetectorConfig",
    "FeatureExtractor",
    "Proposal",
    "RpnHead",
    "generate_proposals",
    "RoiSample",
    "roi_pool",
    "roi_pool_backward",
    "sample_rois",
    "PredictionHead",
    "Detector",
    "StepStats",
    "TrainPlan",
    "build_train_plan",
    "detect",
    "detection_loss",
    "joint_loss",
    "rpn_loss",
    "train_step",
]
