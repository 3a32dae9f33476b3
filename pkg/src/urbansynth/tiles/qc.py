"""Tile-level quality control: reject tiles whose energy layer has large
contiguous missing blocks relative to its annotated extent."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .model import QCStatus, Tile

# 4-connectivity for the missing-block components
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class QCDecision:
    status: QCStatus
    reason: str
    missing_fraction: float = 0.0


def largest_missing_block_fraction(tile: Tile) -> float:
    """Largest 4-connected null/zero component inside the annotated extent,
    as a fraction of the annotated area. Returns 1.0 when nothing is annotated.

    The annotated extent is where an energy value is expected: the building
    footprint (height > 0) plus every pixel that does carry energy. This is an
    automated stand-in for the expert review of energy-vs-morphology mismatch.
    """
    null = tile.energy_null_mask if tile.energy_null_mask is not None else np.zeros(tile.shape, bool)
    annotated = (tile.height_map > 0) | (tile.energy_map > 0)
    area = int(annotated.sum())
    if area == 0:
        return 1.0
    missing = annotated & (null | (tile.energy_map == 0))
    if not missing.any():
        return 0.0
    labels, count = ndimage.label(missing, structure=_CROSS)
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=range(1, count + 1))
    return float(np.max(sizes)) / area


def qc_filter(
    tile: Tile,
    max_null_block_fraction: float,
    overrides: dict[str, QCStatus] | None = None,
) -> QCDecision:
    """Decide accepted/rejected for one tile; expert overrides win."""
    if overrides and tile.tile_id in overrides:
        verdict = overrides[tile.tile_id]
        return QCDecision(verdict, "expert override")
    fraction = largest_missing_block_fraction(tile)
    if fraction >= 1.0 and not ((tile.height_map > 0) | (tile.energy_map > 0)).any():
        return QCDecision(QCStatus.REJECTED, "no annotated area", 1.0)
    if fraction > max_null_block_fraction:
        return QCDecision(
            QCStatus.REJECTED,
            f"largest missing block covers {fraction:.1%} of annotated area "
            f"(threshold {max_null_block_fraction:.1%})",
            fraction,
        )
    return QCDecision(QCStatus.ACCEPTED, "within missing-block threshold", fraction)


def load_overrides(path: str | Path) -> dict[str, QCStatus]:
    """Read an expert flag file: one 'tile_id verdict' pair per line."""
    overrides: dict[str, QCStatus] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'tile_id verdict'")
        tile_id, verdict = parts
        try:
            overrides[tile_id] = QCStatus(verdict)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: unknown verdict {verdict!r}") from None
    return overrides
