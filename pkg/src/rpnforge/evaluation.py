"""Detection scoring: greedy matching, threshold sweeps, and average precision.

Matching runs once per image in descending score order; a detection claims
the unmatched eligible ground truth of highest IoU at or above the overlap
threshold. Ground truths above the evaluated difficulty (or ignored
outright) are neutral: overlapping them costs nothing and earns nothing.
The score-threshold sweep and the monotone-envelope area both consume the
fixed match outcomes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import Box2D, iou
from .kitti.labels import Difficulty, KittiLabel, classify_difficulty
from .nms import ScoredBox

TP = "tp"
FP = "fp"
IGNORED_MATCH = "ignored"

SWEEP_THRESHOLDS = tuple(np.linspace(1.0, 0.0, 21))


@dataclass
class MatchResult:
    outcomes: list[str]  # parallel to the input detections
    gt_matched: list[bool]
    num_eligible: int

    def scored_outcomes(self, dets: list[ScoredBox]) -> list[tuple[float, str]]:
        return [(d.score, o) for d, o in zip(dets, self.outcomes)]


def match_detections(
    dets: list[ScoredBox],
    gts: list[tuple[Box2D, Difficulty]],
    iou_thresh: float,
    difficulty: Difficulty,
) -> MatchResult:
    """Classify each detection as TP, FP, or a neutral ignored match."""
    eligible = [difficulty.includes(d) for _, d in gts]
    num_eligible = sum(eligible)
    matched = [False] * len(gts)
    outcomes = [FP] * len(dets)

    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].source_index))
    for i in order:
        det_box = dets[i].box
        best_iou, best_g = 0.0, -1
        ignored_hit = False
        for g, (gt_box, _) in enumerate(gts):
            overlap = iou(det_box, gt_box)
            if overlap < iou_thresh:
                continue
            if eligible[g] and not matched[g]:
                if overlap > best_iou:
                    best_iou, best_g = overlap, g
            elif not eligible[g]:
                ignored_hit = True
        if best_g >= 0:
            matched[best_g] = True
            outcomes[i] = TP
        elif ignored_hit:
            outcomes[i] = IGNORED_MATCH
    return MatchResult(outcomes=outcomes, gt_matched=matched, num_eligible=num_eligible)


@dataclass(frozen=True)
class ConfusionCounts:
    """tp/fp/fn counters; tn is undefined for detection and carried as 0."""

    tp: int
    fp: int
    fn: int
    tn: int = 0


def confusion_at_threshold(
    outcomes: list[tuple[float, str]],
    num_eligible: int,
    score_t: float,
) -> ConfusionCounts:
    """Counts over detections with score >= score_t; fn = eligible GTs - tp."""
    tp = sum(1 for s, o in outcomes if s >= score_t and o == TP)
    fp = sum(1 for s, o in outcomes if s >= score_t and o == FP)
    return ConfusionCounts(tp=tp, fp=fp, fn=num_eligible - tp)


def precision_recall(c: ConfusionCounts) -> tuple[float, float]:
    """0/0 precision is 1 (no claims, none wrong); 0/0 recall is 0."""
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 1.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    return precision, recall


@dataclass(frozen=True)
class PRCurve:
    """(threshold, precision, recall) points, thresholds strictly decreasing."""

    points: tuple[tuple[float, float, float], ...]


def pr_curve(outcomes: list[tuple[float, str]], num_eligible: int) -> PRCurve:
    """Sweep the 21 score thresholds from 1.0 down to 0.0 in 0.05 steps."""
    points = []
    for t in SWEEP_THRESHOLDS:
        p, r = precision_recall(confusion_at_threshold(outcomes, num_eligible, t))
        points.append((float(t), p, r))
    return PRCurve(points=tuple(points))


def average_precision(curve: PRCurve) -> float:
    """Area under the monotone precision envelope, anchored at recall 0.

    Precision is replaced by its running maximum taken from the high-recall
    end downward, then integrated over the recall increments.
    """
    pts = curve.points  # decreasing threshold = non-decreasing recall
    env = [0.0] * len(pts)
    running = 0.0
    for i in range(len(pts) - 1, -1, -1):
        running = max(running, pts[i][1])
        env[i] = running
    ap = 0.0
    prev_recall = 0.0
    for i, (_, _, r) in enumerate(pts):
        ap += (r - prev_recall) * env[i]
        prev_recall = r
    return ap


@dataclass(frozen=True)
class EvalEntry:
    class_name: str
    difficulty: Difficulty
    iou_thresh: float
    ap: float
    num_gt: int
    num_det: int
    curve: PRCurve


@dataclass
class EvalReport:
    entries: list[EvalEntry]
    provenance: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class EvalConfig:
    """Per-class IoU thresholds (KITTI convention: 0.7 for Car, 0.5 otherwise)
    and the difficulty levels to report."""

    iou_default: float = 0.5
    iou_overrides: tuple[tuple[str, float], ...] = (("Car", 0.7),)
    difficulties: tuple[Difficulty, ...] = (
        Difficulty.EASY,
        Difficulty.MODERATE,
        Difficulty.HARD,
    )

    def iou_for(self, class_name: str) -> float:
        for name, t in self.iou_overrides:
            if name == class_name:
                return t
        return self.iou_default


def evaluate_dataset(
    dets_by_image: dict[str, list[KittiLabel]],
    gts_by_image: dict[str, list[KittiLabel]],
    classes: list[str],
    cfg: EvalConfig = EvalConfig(),
    provenance: dict[str, str] | None = None,
) -> EvalReport:
    """Match per image, pool outcomes, and report one AP per class and
    difficulty. Detection image keys must be a subset of ground-truth keys;
    a missing detection file simply means zero detections there."""
    unknown_images = sorted(set(dets_by_image) - set(gts_by_image))
    if unknown_images:
        raise ValueError(f"detections reference unknown images: {unknown_images}")
    known = set(classes)
    for image_id, dets in dets_by_image.items():
        bad = sorted({d.category for d in dets} - known)
        if bad:
            raise ValueError(f"unknown class names in detections for {image_id}: {bad}")

    entries = []
    for class_name in sorted(classes):
        iou_thresh = cfg.iou_for(class_name)
        num_det = sum(
            sum(1 for d in dets if d.category == class_name)
            for dets in dets_by_image.values()
        )
        for difficulty in cfg.difficulties:
            pooled: list[tuple[float, str]] = []
            num_eligible = 0
            for image_id in sorted(gts_by_image):
                gt_labels = [g for g in gts_by_image[image_id] if g.category == class_name]
                gts = [(g.bbox, classify_difficulty(g)) for g in gt_labels]
                det_labels = [
                    d for d in dets_by_image.get(image_id, []) if d.category == class_name
                ]
                for d in det_labels:
                    if d.score is None:
                        raise ValueError(f"detection without score in image {image_id}")
                dets = [
                    ScoredBox(box=d.bbox, score=d.score, class_id=0, source_index=i)
                    for i, d in enumerate(det_labels)
                ]
                result = match_detections(dets, gts, iou_thresh, difficulty)
                pooled.extend(result.scored_outcomes(dets))
                num_eligible += result.num_eligible
            curve = pr_curve(pooled, num_eligible)
            entries.append(
                EvalEntry(
                    class_name=class_name,
                    difficulty=difficulty,
                    iou_thresh=iou_thresh,
                    ap=average_precision(curve),
                    num_gt=num_eligible,
                    num_det=num_det,
                    curve=curve,
                )
            )
    return EvalReport(entries=entries, provenance=dict(provenance or {}))


def report_csv(report: EvalReport) -> str:
    lines = ["class,difficulty,iou_thresh,AP,num_gt,num_det"]
    for e in _sorted_entries(report):
        lines.append(
            f"{e.class_name},{e.difficulty.label},{e.iou_thresh:.2f},"
            f"{e.ap:.6f},{e.num_gt},{e.num_det}"
        )
    return "\n".join(lines) + "\n"


def report_json(report: EvalReport) -> str:
    payload = {
        "provenance": report.provenance,
        "results": [
            {
                "class": e.class_name,
                "difficulty": e.difficulty.label,
                "iou_thresh": e.iou_thresh,
                "ap": e.ap,
                "num_gt": e.num_gt,
                "num_det": e.num_det,
            }
            for e in _sorted_entries(report)
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def report_pr_files(report: EvalReport) -> dict[str, str]:
    """One `threshold,precision,recall` CSV per class/difficulty curve."""
    files = {}
    for e in _sorted_entries(report):
        lines = ["threshold,precision,recall"]
        for t, p, r in e.curve.points:
            lines.append(f"{t:.2f},{p:.6f},{r:.6f}")
        files[f"pr_{e.class_name}_{e.difficulty.label}.csv".lower()] = "\n".join(lines) + "\n"
    return files


def emit_report(report: EvalReport) -> tuple[str, str, dict[str, str]]:
    return report_csv(report), report_json(report), report_pr_files(report)


def _sorted_entries(report: EvalReport) -> list[EvalEntry]:
    return sorted(report.entries, key=lambda e: (e.class_name, e.difficulty.value))


def curve_entry(report: EvalReport, class_name: str, difficulty: Difficulty) -> EvalEntry:
    for e in report.entries:
        if e.class_name == class_name and e.difficulty is difficulty:
            return e
    raise KeyError(f"no entry for {class_name}/{difficulty.label}")
