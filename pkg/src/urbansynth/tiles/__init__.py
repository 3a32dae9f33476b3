from .model import BoundingBox, ClassMap, DensityMetrics, QCStatus, Tile, CONSTRAINT_CHANNELS
from .raster import Geometry, FeatureError, rasterize_constraints, vectorize_mask
from .transforms import (
    BinSpec,
    discretize,
    fit_bins,
    log1p_transform,
    expm1_transform,
)
from .prompts import render_prompt, parse_prompt, PROMPT_TEMPLATE
from .qc import QCDecision, qc_filter, load_overrides
from .store import TileStore, ManifestRow

__all__ = [
    "BoundingBox",
    "ClassMap",
    "DensityMetrics",
    "QCStatus",
    "Tile",
    "CONSTRAINT_CHANNELS",
    "Geometry",
    "FeatureError",
    "rasterize_constraints",
    "vectorize_mask",
    "BinSpec",
    "discretize",
    "fit_bins",
    "log1p_transform",
    "expm1_transform",
    "render_prompt",
    "parse_prompt",
    "PROMPT_TEMPLATE",
    "QCDecision",
    "qc_filter",
    "load_overrides",
    "TileStore",
    "ManifestRow",
]
