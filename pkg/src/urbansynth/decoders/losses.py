"""Segmentation losses: (optionally class-weighted) cross-entropy plus soft
Dice averaged over classes, and inverse-frequency class weight fitting."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

DICE_SMOOTH = 1.0


def seg_loss(
    probs: torch.Tensor,
    labels: torch.Tensor,
    class_weights: torch.Tensor | None = None,
    smooth: float = DICE_SMOOTH,
) -> torch.Tensor:
    """Weighted CE + Dice on a (b, c, h, w) probability map.

    The CE term is the pixel mean of -w_y log p_y; the Dice term averages the
    smoothed soft-Dice loss over all classes. Class weights must be positive.
    """
    if probs.dim() != 4:
        raise ValueError(f"expected (b, c, h, w) probabilities, got {tuple(probs.shape)}")
    if labels.shape != (probs.shape[0], *probs.shape[2:]):
        raise ValueError(f"label shape {tuple(labels.shape)} does not match probabilities")
    n_classes = probs.shape[1]
    if class_weights is not None:
        class_weights = torch.as_tensor(class_weights, dtype=probs.dtype)
        if class_weights.numel() != n_classes:
            raise ValueError("class weight length mismatch")
        if (class_weights <= 0).any() or not torch.isfinite(class_weights).all():
            raise ValueError("class weights must be positive and finite")

    log_p = torch.log(probs.clamp(min=1e-12))
    nll = -log_p.gather(1, labels.unsqueeze(1)).squeeze(1)
    if class_weights is not None:
        nll = nll * class_weights[labels]
    ce = nll.mean()

    one_hot = F.one_hot(labels, n_classes).to(probs.dtype).permute(0, 3, 1, 2)
    intersect = (probs * one_hot).sum(dim=(0, 2, 3))
    denom = probs.sum(dim=(0, 2, 3)) + one_hot.sum(dim=(0, 2, 3))
    dice = (2 * intersect + smooth) / (denom + smooth)
    return ce + (1.0 - dice.mean())


def head_loss(
    logits: torch.Tensor,
    labels: torch.Tensor,
    class_weights: torch.Tensor | None = None,
) -> torch.Tensor:
    """The training-path loss: softmax then the shared CE+Dice objective."""
    return seg_loss(F.softmax(logits, dim=1), labels, class_weights)


def fit_class_weights(label_maps: list[np.ndarray], n_classes: int) -> np.ndarray:
    """Inverse-frequency weights, normalized to mean 1.

    w_c = total / (n_classes * n_c), then divided by the mean weight. Raises
    naming the class when one is absent from the corpus.
    """
    counts = np.zeros(n_classes, dtype=np.int64)
    for labels in label_maps:
        counts += np.bincount(np.asarray(labels).ravel(), minlength=n_classes)
    absent = np.nonzero(counts == 0)[0]
    if absent.size:
        raise ValueError(f"class {int(absent[0])} absent from the corpus")
    weights = counts.sum() / (n_classes * counts.astype(np.float64))
    return weights / weights.mean()
