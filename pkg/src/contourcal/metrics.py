"""Pose and detection metrics: translation error, centerline angle, detected rate and mAP."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, NoPairs
from .geometry import RigidTransform

MAP_PROTOCOL = {
    "iou_threshold": 0.5,
    "matching": "greedy by descending score, best unmatched gt in the same image and class",
    "interpolation": "all points",
    "average": "mean over gt classes",
}


@dataclass(frozen=True)
class BoundingBox2D:
    u_min: float
    v_min: float
    u_max: float
    v_max: float

    def __post_init__(self):
        if not (self.u_min <= self.u_max and self.v_min <= self.v_max):
            raise DataError(f"inverted box {self}")

    @property
    def area(self) -> float:
        return (self.u_max - self.u_min) * (self.v_max - self.v_min)

    def to_json(self) -> list:
        return [self.u_min, self.v_min, self.u_max, self.v_max]

    @classmethod
    def from_json(cls, obj) -> "BoundingBox2D":
        return cls(*(float(v) for v in obj))

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> Optional["BoundingBox2D"]:
        """Pixel-edge box around the set pixels, or None for an empty mask."""
        rows = np.flatnonzero(np.any(mask, axis=1))
        cols = np.flatnonzero(np.any(mask, axis=0))
        if rows.size == 0:
            return None
        return cls(float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1))


def box_iou(a: BoundingBox2D, b: BoundingBox2D) -> float:
    iw = min(a.u_max, b.u_max) - max(a.u_min, b.u_min)
    ih = min(a.v_max, b.v_max) - max(a.v_min, b.v_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union if union > 0.0 else 0.0


def translation_error(a: RigidTransform, b: RigidTransform) -> float:
    return float(np.linalg.norm(a.translation - b.translation))


def centerline_angle_error(a: RigidTransform, b: RigidTransform) -> float:
    """Angle in degrees between the two z axes; spin about the shaft does not count.

    Computed as atan2(|za x zb|, za . zb), which equals the clamped arccos of
    the dot product but stays accurate for nearly parallel axes.
    """
    za, zb = a.rotation[:, 2], b.rotation[:, 2]
    return math.degrees(math.atan2(float(np.linalg.norm(np.cross(za, zb))), float(np.dot(za, zb))))


def detected(pred: BoundingBox2D, gt: BoundingBox2D, thr: float = 0.5) -> bool:
    if not 0.0 < thr <= 1.0:
        raise DataError("threshold must lie in (0, 1]")
    return box_iou(pred, gt) >= thr


@dataclass(frozen=True)
class Detection:
    image_id: str
    box: BoundingBox2D
    score: float
    label: str = "instrument"


@dataclass(frozen=True)
class GroundTruthBox:
    image_id: str
    box: BoundingBox2D
    label: str = "instrument"


def average_precision(recall: np.ndarray, precision: np.ndarray) -> float:
    """Area under the precision envelope, summed at every recall change."""
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def _class_ap(dets: Sequence[Detection], gts: Sequence[GroundTruthBox], thr: float) -> float:
    by_image: dict = {}
    for g in gts:
        by_image.setdefault(g.image_id, []).append(g.box)
    taken = {k: [False] * len(v) for k, v in by_image.items()}
    # stable sort keeps input order among equal scores
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    tp = np.zeros(len(order))
    for rank, i in enumerate(order):
        d = dets[i]
        boxes = by_image.get(d.image_id, [])
        best, best_j = thr, -1
        for j, g in enumerate(boxes):
            if taken[d.image_id][j]:
                continue
            o = box_iou(d.box, g)
            if o >= best:
                best, best_j = o, j
        if best_j >= 0:
            taken[d.image_id][best_j] = True
            tp[rank] = 1.0
    if not order:
        return 0.0
    ctp = np.cumsum(tp)
    recall = ctp / len(gts)
    precision = ctp / np.arange(1, len(order) + 1)
    return average_precision(recall, precision)


def mean_average_precision(detections: Sequence[Detection], gts: Sequence[GroundTruthBox], thr: float = 0.5) -> float:
    """All-points interpolated AP at one IoU threshold, averaged over ground-truth classes."""
    for d in detections:
        if not math.isfinite(d.score):
            raise DataError(f"non-finite detection score in image {d.image_id}")
    labels = sorted({g.label for g in gts})
    if not labels:
        return 0.0
    aps = [_class_ap([d for d in detections if d.label == c], [g for g in gts if g.label == c], thr)
           for c in labels]
    return float(np.mean(aps))


@dataclass(frozen=True)
class EvalPair:
    """One ground-truth instance and the prediction made for it (fields None when nothing was predicted)."""
    gt_pose: RigidTransform
    gt_box: BoundingBox2D
    pred_pose: Optional[RigidTransform] = None
    pred_box: Optional[BoundingBox2D] = None
    score: float = 1.0
    image_id: Optional[str] = None


@dataclass(frozen=True)
class PoseErrorSummary:
    mean_translation_mm: Optional[float]
    mean_centerline_deg: Optional[float]
    detected_rate_pct: float
    map_at_50: float
    n_pairs: int = 0
    n_detected: int = 0

    def to_json(self) -> dict:
        return {
            "mean_translation_mm": self.mean_translation_mm,
            "mean_centerline_deg": self.mean_centerline_deg,
            "detected_rate_pct": self.detected_rate_pct,
            "map_at_50": self.map_at_50,
            "n_pairs": self.n_pairs,
            "n_detected": self.n_detected,
            "map_protocol": MAP_PROTOCOL,
        }


def summarize(pairs: Sequence[EvalPair], thr: float = 0.5, unmatched: Sequence[Detection] = ()) -> PoseErrorSummary:
    """Detected rate and mAP over all pairs; pose errors averaged over detected pairs only.

    ``unmatched`` holds predictions with no ground-truth instance; they only
    count as extra detections in the mAP.
    """
    pairs = list(pairs)
    if not pairs:
        raise NoPairs("nothing to summarize")
    trans, angles = [], []
    dets, gts = [], []
    for k, p in enumerate(pairs):
        image = p.image_id if p.image_id is not None else str(k)
        gts.append(GroundTruthBox(image, p.gt_box))
        if p.pred_box is None:
            continue
        dets.append(Detection(image, p.pred_box, p.score))
        if p.pred_pose is not None and detected(p.pred_box, p.gt_box, thr):
            trans.append(translation_error(p.pred_pose, p.gt_pose))
            angles.append(centerline_angle_error(p.pred_pose, p.gt_pose))
    n_det = len(trans)
    return PoseErrorSummary(
        mean_translation_mm=math.fsum(trans) / n_det if n_det else None,
        mean_centerline_deg=math.fsum(angles) / n_det if n_det else None,
        detected_rate_pct=100.0 * n_det / len(pairs),
        map_at_50=mean_average_precision(dets + list(unmatched), gts, thr),
        n_pairs=len(pairs),
        n_detected=n_det,
    )
