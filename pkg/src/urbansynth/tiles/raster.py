"""Rasterization of vector constraint layers onto the tile grid.

Sampling rule: a pixel is set when its cell center falls inside the geometry
(point-in-polygon for areas, distance-to-centerline <= half stroke width for
lines). The rule is deterministic, cheap to replicate client-side, and makes
rasterize(vectorize(mask)) an identity for axis-aligned inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import BoundingBox, CONSTRAINT_CHANNELS


@dataclass(frozen=True)
class Geometry:
    """A tagged vector feature in lon/lat coordinates.

    ``width_px`` is the stroke width of line features measured in output
    pixels; polygons ignore it.
    """

    channel: str                 # one of CONSTRAINT_CHANNELS
    kind: str                    # "line" | "polygon"
    coords: tuple[tuple[float, float], ...]
    width_px: float = 1.0


@dataclass(frozen=True)
class FeatureError:
    index: int
    reason: str


def _validate(geom: Geometry, index: int) -> FeatureError | None:
    if geom.channel not in CONSTRAINT_CHANNELS:
        return FeatureError(index, f"unknown channel {geom.channel!r}")
    if geom.kind not in ("line", "polygon"):
        return FeatureError(index, f"unknown kind {geom.kind!r}")
    minimum = 2 if geom.kind == "line" else 3
    if len(geom.coords) < minimum:
        return FeatureError(index, f"{geom.kind} needs >= {minimum} points")
    for x, y in geom.coords:
        if not (math.isfinite(x) and math.isfinite(y)):
            return FeatureError(index, "non-finite coordinate")
    if geom.kind == "line" and (not math.isfinite(geom.width_px) or geom.width_px <= 0):
        return FeatureError(index, f"invalid stroke width {geom.width_px}")
    return None


def _to_pixel(coords, bbox: BoundingBox, shape) -> np.ndarray:
    """Map lon/lat vertices to pixel coordinates (col, row), row 0 = north."""
    h, w = shape
    pts = np.asarray(coords, dtype=float)
    cols = (pts[:, 0] - bbox.west) / bbox.width * w
    rows = (bbox.north - pts[:, 1]) / bbox.height * h
    return np.stack([cols, rows], axis=1)


def _segment_distance(px: np.ndarray, py: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from points (px, py) to segment a-b, all in pixel units."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.hypot(px - a[0], py - a[1])
    t = ((px - a[0]) * ab[0] + (py - a[1]) * ab[1]) / denom
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(px - (a[0] + t * ab[0]), py - (a[1] + t * ab[1]))


def _point_in_polygon(px: np.ndarray, py: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd rule point-in-polygon test, vectorized over points."""
    inside = np.zeros(px.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        crosses = (y1 > py) != (y2 > py)
        if not crosses.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (px < xcross)
    return inside


def rasterize_constraints(
    geometries: list[Geometry],
    bbox: BoundingBox,
    shape: tuple[int, int],
) -> tuple[np.ndarray, list[FeatureError]]:
    """Rasterize tagged geometries into a binary H x W x 3 constraint mask.

    Features outside the bbox are silently clipped; invalid features are
    skipped and reported in the returned error list.
    """
    h, w = shape
    if h <= 0 or w <= 0:
        raise ValueError(f"invalid raster shape {shape}")
    mask = np.zeros((h, w, len(CONSTRAINT_CHANNELS)), dtype=np.uint8)
    errors: list[FeatureError] = []

    rows, cols = np.mgrid[0:h, 0:w]
    px = cols + 0.5
    py = rows + 0.5

    for index, geom in enumerate(geometries):
        err = _validate(geom, index)
        if err is not None:
            errors.append(err)
            continue
        channel = CONSTRAINT_CHANNELS.index(geom.channel)
        pts = _to_pixel(geom.coords, bbox, shape)
        if geom.kind == "line":
            half = geom.width_px / 2.0
            hit = np.zeros((h, w), dtype=bool)
            for a, b in zip(pts[:-1], pts[1:]):
                # skip segments that cannot reach the grid
                lo = np.minimum(a, b) - half
                hi = np.maximum(a, b) + half
                if hi[0] < 0 or hi[1] < 0 or lo[0] > w or lo[1] > h:
                    continue
                hit |= _segment_distance(px, py, a, b) <= half
            mask[hit, channel] = 1
        else:
            mask[_point_in_polygon(px, py, pts), channel] = 1
    return mask, errors


def vectorize_mask(
    mask: np.ndarray,
    bbox: BoundingBox,
    channel: str,
) -> list[Geometry]:
    """Turn one binary channel back into axis-aligned rectangle polygons.

    Each horizontal run of set pixels becomes one rectangle, which makes the
    rasterize round trip exact for any input mask.
    """
    h, w = mask.shape
    lon_per_px = bbox.width / w
    lat_per_px = bbox.height / h
    out: list[Geometry] = []
    for r in range(h):
        row = mask[r]
        c = 0
        while c < w:
            if not row[c]:
                c += 1
                continue
            c0 = c
            while c < w and row[c]:
                c += 1
            west = bbox.west + c0 * lon_per_px
            east = bbox.west + c * lon_per_px
            north = bbox.north - r * lat_per_px
            south = bbox.north - (r + 1) * lat_per_px
            out.append(
                Geometry(
                    channel=channel,
                    kind="polygon",
                    coords=((west, south), (east, south), (east, north), (west, north)),
                )
            )
    return out
