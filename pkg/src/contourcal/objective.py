"""Contour overlap objective: an alpha blend of region IoU and edge-proximity overlap."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionMismatch, EmptyGroundTruth, NoFrames
from .raster import band_correlation, distance_transform, extract_edges, weight_field


@dataclass(frozen=True)
class ObjectiveConfig:
    alpha: float = 0.8
    d_max: float = 10.0
    aggregate: str = "mean"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise DataError("alpha must lie in [0, 1]")
        if not self.d_max > 0:
            raise DataError("d_max must be positive")
        if self.aggregate not in ("mean", "sum"):
            raise DataError("aggregate must be 'mean' or 'sum'")


@dataclass(frozen=True)
class ContourAnnotation:
    frame_id: str
    instrument_id: str
    polygons: tuple
    gripper_deg: float = 0.0
    extra: dict = field(default_factory=dict)  # unknown record fields kept by lax loading

    def __post_init__(self):
        if not self.polygons:
            raise DataError("annotation needs at least one polygon")


def _same_shape(a, b):
    if np.shape(a) != np.shape(b):
        raise DimensionMismatch(f"shape {np.shape(a)} vs {np.shape(b)}")


def iou(a: np.ndarray, b: np.ndarray) -> float:
    _same_shape(a, b)
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def edge_overlap(gt: np.ndarray, proj: np.ndarray) -> float:
    """Normalized correlation of two weight fields, relative to the ground truth's energy."""
    _same_shape(gt, proj)
    denom = float(np.sum(gt * gt))
    if denom == 0.0:
        raise EmptyGroundTruth("ground-truth weight field is zero everywhere")
    return float(np.sum(gt * proj)) / denom


def mask_weight_field(mask: np.ndarray, d_max: float) -> np.ndarray:
    return weight_field(distance_transform(extract_edges(mask)), d_max)


def contour_objective(gt_mask: np.ndarray, proj_mask: np.ndarray, cfg: ObjectiveConfig = ObjectiveConfig()) -> float:
    _same_shape(gt_mask, proj_mask)
    if not np.any(proj_mask):
        return 0.0
    o_iou = iou(gt_mask, proj_mask)
    o_edge = edge_overlap(mask_weight_field(gt_mask, cfg.d_max), mask_weight_field(proj_mask, cfg.d_max))
    return cfg.alpha * o_iou + (1.0 - cfg.alpha) * o_edge


def reduce_scores(scores, cfg: ObjectiveConfig) -> float:
    scores = list(scores)
    if not scores:
        raise NoFrames("objective needs at least one contour")
    total = math.fsum(scores)
    return total / len(scores) if cfg.aggregate == "mean" else total


def dataset_objective(pairs, cfg: ObjectiveConfig = ObjectiveConfig()) -> float:
    """Mean (or sum) of per-contour objectives over ``(gt_mask, proj_mask)`` pairs, in order."""
    return reduce_scores((contour_objective(g, p, cfg) for g, p in pairs), cfg)


class ContourTarget:
    """A ground-truth contour with its weight field precomputed.

    ``score(proj)`` equals ``contour_objective(gt, proj, cfg)`` but only runs
    the distance transform over the band where the ground-truth weights are
    non-zero (plus a ``d_max`` margin, which keeps the clamped distances exact).
    """

    def __init__(self, gt_mask: np.ndarray, cfg: ObjectiveConfig = ObjectiveConfig()):
        self.cfg = cfg
        self.mask = np.asarray(gt_mask, dtype=bool)
        self.count = int(np.count_nonzero(self.mask))
        self.weights = mask_weight_field(self.mask, cfg.d_max)
        self.energy = float(np.sum(self.weights * self.weights))
        if self.energy == 0.0:
            raise EmptyGroundTruth("ground-truth contour is empty")
        H, W = self.mask.shape
        rows = np.flatnonzero(self.weights.any(axis=1))
        cols = np.flatnonzero(self.weights.any(axis=0))
        self.band = (rows[0], rows[-1] + 1, cols[0], cols[-1] + 1)
        m = int(math.ceil(cfg.d_max))
        r0, r1, c0, c1 = self.band
        self.outer = (max(0, r0 - m), min(H, r1 + m), max(0, c0 - m), min(W, c1 + m))
        self.band_rows, self.band_cols = np.nonzero(self.weights)
        self.band_weights = self.weights[self.band_rows, self.band_cols]

    def terms(self, proj: np.ndarray) -> tuple[float, float]:
        _same_shape(self.mask, proj)
        n_proj = int(np.count_nonzero(proj))
        if n_proj == 0:
            return 0.0, 0.0
        inter = int(np.count_nonzero(self.mask & proj))
        o_iou = inter / (self.count + n_proj - inter)
        num = band_correlation(proj, self.outer, self.band_rows, self.band_cols, self.band_weights, self.cfg.d_max)
        return o_iou, num / self.energy

    def score(self, proj: np.ndarray) -> float:
        o_iou, o_edge = self.terms(proj)
        return self.cfg.alpha * o_iou + (1.0 - self.cfg.alpha) * o_edge
