"""KITTI text-label parsing, emission, and difficulty classification.

A label line carries 15 whitespace-separated fields (category, truncation,
occlusion, alpha, 2D box, 3D dimensions, 3D location, rotation), detections
append a 16th score field. Canonical formatting uses two decimals for every
geometry field and six for the score, so parse/write round-trips are
byte-identical on canonical files.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from ..geometry import Box2D


class Difficulty(enum.Enum):
    EASY = 0
    MODERATE = 1
    HARD = 2
    IGNORED = 3

    def includes(self, other: "Difficulty") -> bool:
        """Whether `other` qualifies when evaluating at this level."""
        if self is Difficulty.IGNORED or other is Difficulty.IGNORED:
            return False
        return other.value <= self.value

    @property
    def label(self) -> str:
        return self.name.capitalize()


@dataclass(frozen=True)
class KittiLabel:
    """One ground-truth or detection record.

    The 3D fields (alpha, dimensions, location, rotation_y) are parsed and
    carried verbatim but unused by the 2D pipeline.
    """

    category: str
    truncation: float
    occlusion: int
    alpha: float
    bbox: Box2D
    dimensions: tuple[float, float, float] = (0.0, 0.0, 0.0)
    location: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation_y: float = 0.0
    score: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.truncation <= 1.0:
            raise ValueError(f"truncation {self.truncation} outside [0,1]")
        if self.occlusion not in (0, 1, 2, 3):
            raise ValueError(f"occlusion {self.occlusion} outside 0..3")

    def with_score(self, score: float) -> "KittiLabel":
        return replace(self, score=score)


def _parse_line(line: str, lineno: int) -> KittiLabel:
    fields = line.split()
    if len(fields) not in (15, 16):
        raise ValueError(
            f"line {lineno}: expected 15 or 16 fields, got {len(fields)}"
        )
    try:
        nums = [float(v) for v in fields[1:]]
    except ValueError as e:
        raise ValueError(f"line {lineno}: non-numeric field ({e})") from None
    # real KITTI marks DontCare rows with -1 sentinels; fold them into the
    # valid ranges (unknown occlusion -> 3, which every difficulty ignores)
    trunc = min(max(nums[0], 0.0), 1.0)
    occ = int(nums[1])
    if occ not in (0, 1, 2, 3):
        occ = 3
    x1, y1, x2, y2 = nums[3:7]
    return KittiLabel(
        category=fields[0],
        truncation=trunc,
        occlusion=occ,
        alpha=nums[2],
        bbox=Box2D(min(x1, x2), min(y1, y2), max(x1, x2), max(y1, y2)),
        dimensions=(nums[7], nums[8], nums[9]),
        location=(nums[10], nums[11], nums[12]),
        rotation_y=nums[13],
        score=nums[14] if len(fields) == 16 else None,
    )


def parse_label_file(text: str) -> list[KittiLabel]:
    """Parse one label file; unknown categories pass through verbatim."""
    labels = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        labels.append(_parse_line(line, lineno))
    return labels


def format_label(label: KittiLabel) -> str:
    b = label.bbox
    d, loc = label.dimensions, label.location
    base = (
        f"{label.category} {label.truncation:.2f} {label.occlusion:d} {label.alpha:.2f} "
        f"{b.x1:.2f} {b.y1:.2f} {b.x2:.2f} {b.y2:.2f} "
        f"{d[0]:.2f} {d[1]:.2f} {d[2]:.2f} "
        f"{loc[0]:.2f} {loc[1]:.2f} {loc[2]:.2f} {label.rotation_y:.2f}"
    )
    if label.score is not None:
        base += f" {label.score:.6f}"
    return base


def write_label_file(labels: list[KittiLabel]) -> str:
    return "".join(format_label(l) + "\n" for l in labels)


def write_detections(dets: list[KittiLabel]) -> str:
    """Emit detection records sorted by descending score (stable)."""
    for i, d in enumerate(dets):
        if d.score is None:
            raise ValueError(f"detection {i} ({d.category}) is missing a score")
    ordered = sorted(dets, key=lambda d: -d.score)
    return write_label_file(ordered)


def classify_difficulty(label: KittiLabel) -> Difficulty:
    """Bucket a label by minimum box height, occlusion, and truncation."""
    height = label.bbox.height
    if height >= 40 and label.occlusion == 0 and label.truncation <= 0.15:
        return Difficulty.EASY
    if height >= 25 and label.occlusion <= 1 and label.truncation <= 0.30:
        return Difficulty.MODERATE
    if height >= 25 and label.occlusion <= 2 and label.truncation <= 0.50:
        return Difficulty.HARD
    return Difficulty.IGNORED
