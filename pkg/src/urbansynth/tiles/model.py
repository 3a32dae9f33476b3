"""Tile data model: one aligned 2 km x 2 km sample and its derived records."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

# Fixed channel order of the constraint mask, everywhere in the system.
CONSTRAINT_CHANNELS = ("water", "railway", "major_road")


class QCStatus(str, enum.Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    UNREVIEWED = "unreviewed"


@dataclass(frozen=True)
class BoundingBox:
    """Geodetic rectangle in WGS84 lon/lat degrees."""

    west: float
    south: float
    east: float
    north: float

    def __post_init__(self):
        for v in (self.west, self.south, self.east, self.north):
            if not math.isfinite(v):
                raise ValueError("bounding box coordinates must be finite")
        if self.east <= self.west or self.north <= self.south:
            raise ValueError(f"degenerate bounding box: {self}")

    @property
    def width(self) -> float:
        return self.east - self.west

    @property
    def height(self) -> float:
        return self.north - self.south


@dataclass(frozen=True)
class DensityMetrics:
    """Per-tile urban density metrics fed into the text prompt."""

    bcr: float  # building coverage ratio, percent of tile area
    bvd: float  # building volume density, m^3 per m^2
    rd: float   # road density, km per km^2

    def __post_init__(self):
        for name, v in (("bcr", self.bcr), ("bvd", self.bvd), ("rd", self.rd)):
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
            if v < 0:
                raise ValueError(f"{name} must be >= 0, got {v}")
        if self.bcr > 100:
            raise ValueError(f"bcr must be <= 100, got {self.bcr}")


@dataclass
class ClassMap:
    """Discretized label grid with its quantile bin edges.

    Label 0 is background (source value 0); positive labels are quantile bins
    over positive source values. ``bin_edges`` is None only for degenerate
    (background-only) maps.
    """

    labels: np.ndarray           # int grid H x W in [0, n_classes-1]
    n_classes: int               # 5 for height, 4 for energy
    bin_edges: tuple[float, ...] | None
    source: str                  # "height" | "energy"
    degenerate: bool = False
    percentile_method: str = "linear"

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.source not in ("height", "energy"):
            raise ValueError(f"unknown source {self.source!r}")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ValueError("labels out of [0, n_classes-1]")
        if self.bin_edges is not None:
            edges = np.asarray(self.bin_edges, dtype=float)
            if len(edges) != self.n_classes - 2:
                raise ValueError(
                    f"expected {self.n_classes - 2} bin edges, got {len(edges)}"
                )
            if not np.all(np.diff(edges) > 0):
                raise ValueError("bin edges must be strictly increasing")
        elif not self.degenerate:
            raise ValueError("bin_edges may be omitted only for degenerate maps")


@dataclass
class Tile:
    """One aligned sample: imagery, constraints, height and energy layers.

    All grids share the same H x W. ``energy_map`` holds log1p(kBtu) values;
    ``energy_null_mask`` marks pixels where the source record had no
    annotation at all (distinct from measured-zero consumption).
    """

    tile_id: str
    city: str
    bbox: BoundingBox
    image: np.ndarray            # H x W x 3 float in [0, 1]
    constraint_mask: np.ndarray  # H x W x 3 binary, CONSTRAINT_CHANNELS order
    height_map: np.ndarray       # H x W float meters, 0 = non-building
    energy_map: np.ndarray       # H x W float log1p(kBtu), 0 = non-energy
    density: DensityMetrics
    qc: QCStatus = QCStatus.UNREVIEWED
    energy_null_mask: np.ndarray | None = None

    def __post_init__(self):
        self.validate()

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape[0], self.image.shape[1]

    def validate(self) -> None:
        h, w = self.image.shape[:2]
        if self.image.shape != (h, w, 3):
            raise ValueError(f"image must be HxWx3, got {self.image.shape}")
        if self.constraint_mask.shape != (h, w, len(CONSTRAINT_CHANNELS)):
            raise ValueError(
                f"constraint mask shape {self.constraint_mask.shape} does not "
                f"match image {h}x{w}"
            )
        for name, grid in (("height_map", self.height_map), ("energy_map", self.energy_map)):
            if grid.shape != (h, w):
                raise ValueError(f"{name} shape {grid.shape} does not match image {h}x{w}")
            if not np.all(np.isfinite(grid)):
                raise ValueError(f"{name} contains non-finite values")
            if grid.min() < 0:
                raise ValueError(f"{name} contains negative values")
        if self.image.min() < 0 or self.image.max() > 1:
            raise ValueError("image values must lie in [0, 1]")
        uniq = np.unique(self.constraint_mask)
        if not np.isin(uniq, (0, 1)).all():
            raise ValueError("constraint mask values must be 0 or 1")
        if self.energy_null_mask is not None:
            if self.energy_null_mask.shape != (h, w):
                raise ValueError("energy_null_mask shape mismatch")
            if np.any(self.energy_map[self.energy_null_mask] != 0):
                raise ValueError("null-annotated pixels must carry energy 0")
