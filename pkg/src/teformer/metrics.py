"""Segmentation scoring: confusion matrices, mIoU/mF1/PA, tolerant boundary F1.

Confusion matrices are plain integer arrays (rows = ground truth, columns =
prediction) and merge by elementwise addition, so sharded evaluation equals
one-shot evaluation exactly.  Class means are taken over classes present in
ground truth or prediction; absent classes are excluded.  Boundary F1 is a
supplementary map-level score: predicted and reference boundary pixels are
matched within a 2-pixel tolerance band.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


def confusion_matrix(pred, gt, num_classes: int, ignore_index: int = 255) -> np.ndarray:
    """Count scored pixels into a (K, K) matrix indexed [gt, pred]."""
    pred = np.asarray(pred).reshape(-1).astype(np.int64)
    gt = np.asarray(gt).reshape(-1).astype(np.int64)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction and ground truth sizes differ: {pred.shape} vs {gt.shape}")
    valid = gt != ignore_index
    pred, gt = pred[valid], gt[valid]
    if pred.size and (pred.max() >= num_classes or gt.max() >= num_classes or pred.min() < 0 or gt.min() < 0):
        raise ValueError(f"labels outside [0, {num_classes}) encountered")
    counts = np.bincount(gt * num_classes + pred, minlength=num_classes * num_classes)
    return counts.reshape(num_classes, num_classes)


@dataclass
class MetricsReport:
    per_class_iou: list[float | None]
    per_class_f1: list[float | None]
    miou: float
    mf1: float
    pa: float
    boundary_f1: float | None
    scored_pixels: int
    per_class_pixels: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_class": {"iou": self.per_class_iou, "f1": self.per_class_f1},
            "miou": self.miou,
            "mf1": self.mf1,
            "pa": self.pa,
            "boundary_f1": self.boundary_f1,
            "scored_pixels": self.scored_pixels,
            "per_class_pixels": self.per_class_pixels,
        }


def compute_metrics(cm: np.ndarray, boundary_f1: float | None = None) -> MetricsReport:
    """Derive per-class IoU/F1 and their means over present classes, plus PA."""
    cm = np.asarray(cm, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.sum() == 0:
        raise ValueError("confusion matrix must be square and non-empty")
    tp = np.diag(cm).astype(np.float64)
    gt_total = cm.sum(axis=1).astype(np.float64)
    pred_total = cm.sum(axis=0).astype(np.float64)
    present = (gt_total + pred_total) > 0
    union = gt_total + pred_total - tp
    iou = np.where(union > 0, tp / np.maximum(union, 1), 0.0)
    f1 = np.where((gt_total + pred_total) > 0, 2 * tp / np.maximum(gt_total + pred_total, 1), 0.0)
    per_iou = [float(iou[c]) if present[c] else None for c in range(cm.shape[0])]
    per_f1 = [float(f1[c]) if present[c] else None for c in range(cm.shape[0])]
    return MetricsReport(
        per_class_iou=per_iou,
        per_class_f1=per_f1,
        miou=float(iou[present].mean()),
        mf1=float(f1[present].mean()),
        pa=float(tp.sum() / cm.sum()),
        boundary_f1=boundary_f1,
        scored_pixels=int(cm.sum()),
        per_class_pixels=[int(v) for v in cm.sum(axis=1)],
    )


def boundary_mask(labels: np.ndarray, ignore_index: int = 255) -> np.ndarray:
    """Pixels whose label differs from a 4-neighbor; ignore regions excluded."""
    lab = np.asarray(labels)
    edge = np.zeros(lab.shape, dtype=bool)
    edge[:-1, :] |= lab[:-1, :] != lab[1:, :]
    edge[1:, :] |= lab[1:, :] != lab[:-1, :]
    edge[:, :-1] |= lab[:, :-1] != lab[:, 1:]
    edge[:, 1:] |= lab[:, 1:] != lab[:, :-1]
    return edge & (lab != ignore_index)


@dataclass
class BoundaryScore:
    """Streaming tolerant boundary precision/recall accumulator."""

    tolerance: int = 2
    ignore_index: int = 255
    matched_pred: int = 0
    total_pred: int = 0
    matched_gt: int = 0
    total_gt: int = 0

    def update(self, pred: np.ndarray, gt: np.ndarray):
        pb = boundary_mask(pred, self.ignore_index) & (gt != self.ignore_index)
        gb = boundary_mask(gt, self.ignore_index)
        if gb.any():
            dist_to_gt = ndimage.distance_transform_edt(~gb)
            self.matched_pred += int((pb & (dist_to_gt <= self.tolerance)).sum())
        self.total_pred += int(pb.sum())
        if pb.any():
            dist_to_pred = ndimage.distance_transform_edt(~pb)
            self.matched_gt += int((gb & (dist_to_pred <= self.tolerance)).sum())
        self.total_gt += int(gb.sum())

    @property
    def f1(self) -> float:
        precision = self.matched_pred / self.total_pred if self.total_pred else 0.0
        recall = self.matched_gt / self.total_gt if self.total_gt else 0.0
        if precision + recall == 0:
            return 0.0
        return 2 * precision * recall / (precision + recall)
