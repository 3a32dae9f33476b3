"""Physical-value reconstruction from class predictions via expm1."""

from __future__ import annotations

import numpy as np

from ..tiles.model import ClassMap
from ..tiles.transforms import BinSpec, expm1_transform, reconstruct_from_classes


def reconstruct_energy(
    pred: ClassMap | np.ndarray,
    bins: BinSpec,
    representative_rule: str = "bin_median",
) -> np.ndarray:
    """Invert an energy class map to kBtu: class 0 stays 0, class c takes
    expm1 of the bin's representative log value (training-split bin median)."""
    labels = pred.labels if isinstance(pred, ClassMap) else np.asarray(pred)
    log_values = reconstruct_from_classes(labels, bins, representative_rule)
    out = expm1_transform(log_values)
    out[labels == 0] = 0.0
    return out


def tile_totals(grids: list[np.ndarray]) -> np.ndarray:
    """Per-tile sums, the unit of comparison for calibration metrics."""
    return np.array([float(np.asarray(g).sum()) for g in grids], dtype=np.float64)
