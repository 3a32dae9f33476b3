"""Segmentation quality metrics: confusion matrix, per-class IoU/precision/
recall/Dice, accuracy and mIoU."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ClassMetrics:
    iou: float
    precision: float
    recall: float
    dice: float


@dataclass(frozen=True)
class SegmentationResult:
    confusion: np.ndarray            # n x n int, rows = truth, cols = prediction
    per_class: tuple[ClassMetrics, ...]
    accuracy: float
    miou: float

    def class_table(self) -> list[dict]:
        return [
            {
                "class": c,
                "iou": m.iou,
                "precision": m.precision,
                "recall": m.recall,
                "dice": m.dice,
            }
            for c, m in enumerate(self.per_class)
        ]


def confusion_matrix(pred: np.ndarray, truth: np.ndarray, n_classes: int) -> np.ndarray:
    """Confusion counts; row index is the ground-truth class."""
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape}, truth {truth.shape}")
    if pred.min() < 0 or pred.max() >= n_classes or truth.min() < 0 or truth.max() >= n_classes:
        raise ValueError("labels out of range")
    flat = truth * n_classes + pred
    counts = np.bincount(flat, minlength=n_classes * n_classes)
    return counts.reshape(n_classes, n_classes)


def metrics_from_confusion(confusion: np.ndarray) -> SegmentationResult:
    confusion = np.asarray(confusion)
    n = confusion.shape[0]
    tp = np.diag(confusion).astype(float)
    fn = confusion.sum(axis=1) - tp  # truth row minus diagonal
    fp = confusion.sum(axis=0) - tp

    per_class = []
    ious = []
    for c in range(n):
        denom_iou = tp[c] + fp[c] + fn[c]
        denom_prec = tp[c] + fp[c]
        denom_rec = tp[c] + fn[c]
        if denom_iou == 0:
            # class absent from both maps: undefined, excluded from the mean
            per_class.append(ClassMetrics(np.nan, np.nan, np.nan, np.nan))
            continue
        iou = tp[c] / denom_iou
        per_class.append(
            ClassMetrics(
                iou=iou,
                precision=tp[c] / denom_prec if denom_prec else 0.0,
                recall=tp[c] / denom_rec if denom_rec else 0.0,
                dice=2 * tp[c] / (2 * tp[c] + fp[c] + fn[c]),
            )
        )
        ious.append(iou)
    total = confusion.sum()
    return SegmentationResult(
        confusion=confusion,
        per_class=tuple(per_class),
        accuracy=float(tp.sum() / total) if total else 0.0,
        miou=float(np.mean(ious)) if ious else 0.0,
    )


def confusion_and_seg_metrics(
    pred: np.ndarray,
    truth: np.ndarray,
    n_classes: int,
    foreground_only: bool = False,
) -> SegmentationResult:
    """Compute all per-class metrics for a predicted vs ground-truth label map.

    ``foreground_only`` drops class 0 from the mIoU average (per-class entries
    are still reported for every class).
    """
    result = metrics_from_confusion(confusion_matrix(pred, truth, n_classes))
    if foreground_only:
        fg = [m.iou for m in result.per_class[1:] if not np.isnan(m.iou)]
        result = SegmentationResult(
            confusion=result.confusion,
            per_class=result.per_class,
            accuracy=result.accuracy,
            miou=float(np.mean(fg)) if fg else 0.0,
        )
    return result
