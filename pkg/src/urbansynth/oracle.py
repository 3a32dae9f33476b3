"""Deterministic synthetic city corpus.

Imagery, height and energy layers are known functions of the constraint
layers and a seed: roads/water/rail follow the rasterized geometries, block-
aligned buildings carry heights whose roof color encodes the height, and
per-pixel energy is a fixed monotone function of height. This gives the
training and evaluation pipeline a desk-scale ground truth where constraint
fidelity and decoding quality are measurable by construction, including an
inverse renderer that re-detects roads from rendered imagery.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tiles.model import BoundingBox, DensityMetrics, QCStatus, Tile
from .tiles.qc import qc_filter
from .tiles.raster import Geometry, rasterize_constraints
from .tiles.store import TileStore
from .tiles.transforms import BinSpec, fit_bins, log1p_transform

# rendering palette; roofs use the height ramp below
GROUND_RGB = (0.55, 0.62, 0.42)
ROAD_RGB = (0.25, 0.25, 0.27)
WATER_RGB = (0.16, 0.33, 0.72)
RAIL_RGB = (0.55, 0.27, 0.13)

# piecewise-linear roof color ramp over normalized height
_RAMP = np.array(
    [
        (0.10, 0.08, 0.45),
        (0.55, 0.10, 0.45),
        (0.90, 0.45, 0.20),
        (0.98, 0.85, 0.30),
    ]
)

MIN_HEIGHT_M = 3.0
MAX_HEIGHT_M = 60.0
ENERGY_COEFF = 35.0      # kBtu per pixel at h = 1 m
ENERGY_EXPONENT = 1.2
BLOCK_PX = 4             # building/constraint alignment unit
TILE_KM = 2.0

ROAD_DETECT_TOLERANCE = 0.12  # max L2 color distance for the inverse renderer


def height_to_roof_color(height: np.ndarray) -> np.ndarray:
    """Map heights (meters) to roof RGB via the fixed ramp.

    The ramp position is logarithmic in height, matching the log-uniform
    height distribution, so equal-population height bands get equally wide
    color bands.
    """
    h = np.clip(np.asarray(height, dtype=float), MIN_HEIGHT_M, MAX_HEIGHT_M)
    x = (np.log(h) - np.log(MIN_HEIGHT_M)) / (np.log(MAX_HEIGHT_M) - np.log(MIN_HEIGHT_M))
    pos = x * (len(_RAMP) - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, len(_RAMP) - 1)
    frac = (pos - lo)[..., None]
    return _RAMP[lo] * (1 - frac) + _RAMP[hi] * frac


def energy_kbtu_from_height(height: np.ndarray) -> np.ndarray:
    """The fixed physical rule: per-pixel annual kBtu from building height."""
    height = np.asarray(height, dtype=float)
    return np.where(height > 0, ENERGY_COEFF * height**ENERGY_EXPONENT, 0.0)


@dataclass
class OracleTileSpec:
    seed: int
    resolution: int = 64
    city: str = "oracleville"
    tint_strength: float = 0.04
    noise_sigma: float = 0.008
    defect: bool = False  # punch a null block into the energy layer


def _tile_bbox(seed: int) -> BoundingBox:
    # distinct but arbitrary geodetic placement per tile
    col = seed % 100
    row = (seed // 100) % 100
    west = -74.2 + col * 0.02
    south = 40.5 + row * 0.02
    return BoundingBox(west=west, south=south, east=west + 0.02, north=south + 0.02)


def _strip_line(bbox: BoundingBox, resolution: int, index_px: float, horizontal: bool, channel: str, width_px: float) -> Geometry:
    frac = index_px / resolution
    if horizontal:
        lat = bbox.north - frac * bbox.height
        coords = ((bbox.west - 1e-4, lat), (bbox.east + 1e-4, lat))
    else:
        lon = bbox.west + frac * bbox.width
        coords = ((lon, bbox.south - 1e-4), (lon, bbox.north + 1e-4))
    return Geometry(channel=channel, kind="line", coords=coords, width_px=width_px)


def generate_tile(spec: OracleTileSpec) -> Tile:
    """Render one deterministic tile from its seed."""
    rng = np.random.default_rng(spec.seed)
    res = spec.resolution
    blocks = res // BLOCK_PX
    bbox = _tile_bbox(spec.seed)

    # constraint geometries on the block grid
    geoms: list[Geometry] = []
    n_h = int(rng.integers(1, 3))
    n_v = int(rng.integers(1, 3))
    used_rows = rng.choice(np.arange(2, blocks - 2), size=n_h, replace=False)
    used_cols = rng.choice(np.arange(2, blocks - 2), size=n_v, replace=False)
    for r in used_rows:
        geoms.append(_strip_line(bbox, res, r * BLOCK_PX + BLOCK_PX / 2, True, "major_road", BLOCK_PX))
    for c in used_cols:
        geoms.append(_strip_line(bbox, res, c * BLOCK_PX + BLOCK_PX / 2, False, "major_road", BLOCK_PX))
    if rng.uniform() < 0.4:
        edge = int(rng.integers(0, 2))
        pos = BLOCK_PX if edge == 0 else res - BLOCK_PX
        geoms.append(_strip_line(bbox, res, pos, True, "water", 2 * BLOCK_PX))
    if rng.uniform() < 0.4:
        r = int(rng.choice(np.arange(1, blocks - 1)))
        geoms.append(_strip_line(bbox, res, r * BLOCK_PX + BLOCK_PX / 2, False, "railway", BLOCK_PX))

    mask, errors = rasterize_constraints(geoms, bbox, (res, res))
    assert not errors, errors

    # block-aligned buildings on cells free of constraints; defect tiles get
    # a contiguous fully-built district whose energy labels are then nulled,
    # the failure mode the tile review is meant to catch
    occupied = mask.any(axis=2)
    height = np.zeros((res, res), dtype=np.float32)
    null_mask = None
    if spec.defect:
        null_mask = np.zeros((res, res), dtype=bool)
        rect = _largest_free_block_rect(occupied, blocks)
        if rect is not None:
            r0, r1, c0, c1 = rect
            for br in range(r0, r1):
                for bc in range(c0, c1):
                    sl = np.s_[br * BLOCK_PX : (br + 1) * BLOCK_PX, bc * BLOCK_PX : (bc + 1) * BLOCK_PX]
                    height[sl] = float(np.exp(rng.uniform(np.log(MIN_HEIGHT_M), np.log(MAX_HEIGHT_M))))
                    null_mask[sl] = True
        density = float(rng.uniform(0.1, 0.2))
    else:
        density = float(rng.uniform(0.3, 0.6))
    # development concentrates along roads: blocks adjacent to a road strip
    # almost always build, outer blocks rarely do, so layout is largely a
    # function of the constraint mask while heights stay tile-random
    road_blocks = mask[:, :, 2].reshape(blocks, BLOCK_PX, blocks, BLOCK_PX).any(axis=(1, 3))
    adjacency = road_blocks.copy()
    adjacency[:-1] |= road_blocks[1:]
    adjacency[1:] |= road_blocks[:-1]
    adjacency[:, :-1] |= road_blocks[:, 1:]
    adjacency[:, 1:] |= road_blocks[:, :-1]
    for br in range(blocks):
        for bc in range(blocks):
            sl = np.s_[br * BLOCK_PX : (br + 1) * BLOCK_PX, bc * BLOCK_PX : (bc + 1) * BLOCK_PX]
            if occupied[sl].any() or height[sl].any():
                continue
            p_build = 0.9 * density / 0.45 if adjacency[br, bc] else 0.35 * density
            if rng.uniform() < min(p_build, 0.95):
                h = float(np.exp(rng.uniform(np.log(MIN_HEIGHT_M), np.log(MAX_HEIGHT_M))))
                height[sl] = h

    energy = log1p_transform(energy_kbtu_from_height(height)).astype(np.float32)
    if null_mask is not None:
        energy = energy.copy()
        energy[null_mask] = 0.0

    image = render_image(height, mask, rng, spec.tint_strength, spec.noise_sigma)
    road_km = sum(2.0 * TILE_KM / 2 for g in geoms if g.channel == "major_road")  # full crossings
    metrics = DensityMetrics(
        bcr=float((height > 0).mean() * 100.0),
        bvd=float(height.mean()),
        rd=float(road_km / (TILE_KM * TILE_KM)),
    )
    return Tile(
        tile_id=f"oracle_{spec.seed:06d}",
        city=spec.city,
        bbox=bbox,
        image=image,
        constraint_mask=mask,
        height_map=height,
        energy_map=energy,
        density=metrics,
        energy_null_mask=null_mask,
    )


def _largest_free_block_rect(occupied: np.ndarray, blocks: int) -> tuple[int, int, int, int] | None:
    """Largest all-free rectangle on the block grid, capped at 8x8 blocks."""
    block_occ = occupied.reshape(blocks, BLOCK_PX, blocks, BLOCK_PX).any(axis=(1, 3))
    cum = np.zeros((blocks + 1, blocks + 1), dtype=int)
    cum[1:, 1:] = np.cumsum(np.cumsum(block_occ, axis=0), axis=1)
    best, best_area = None, 0
    cap = 8
    for r0 in range(blocks):
        for r1 in range(r0 + 1, min(r0 + cap, blocks) + 1):
            for c0 in range(blocks):
                for c1 in range(c0 + 1, min(c0 + cap, blocks) + 1):
                    filled = cum[r1, c1] - cum[r0, c1] - cum[r1, c0] + cum[r0, c0]
                    area = (r1 - r0) * (c1 - c0)
                    if filled == 0 and area > best_area:
                        best, best_area = (r0, r1, c0, c1), area
    return best


def render_image(
    height: np.ndarray,
    constraint_mask: np.ndarray,
    rng: np.random.Generator,
    tint_strength: float = 0.06,
    noise_sigma: float = 0.01,
) -> np.ndarray:
    """The forward renderer: layers to RGB, deterministic given the rng state."""
    res = height.shape[0]
    image = np.empty((res, res, 3), dtype=np.float64)
    image[:] = GROUND_RGB
    building = height > 0
    image[building] = height_to_roof_color(height[building])
    # constraint layers paint over ground/roofs; roads win where they overlap
    image[constraint_mask[:, :, 0] == 1] = WATER_RGB
    image[constraint_mask[:, :, 1] == 1] = RAIL_RGB
    image[constraint_mask[:, :, 2] == 1] = ROAD_RGB
    tint = 1.0 + tint_strength * rng.uniform(-1, 1, size=3)
    image = image * tint + rng.normal(0.0, noise_sigma, size=image.shape)
    return np.clip(image, 0.0, 1.0).astype(np.float32)


def detect_roads(image: np.ndarray, tolerance: float = ROAD_DETECT_TOLERANCE) -> np.ndarray:
    """Inverse renderer: re-detect the road layer from rendered imagery."""
    diff = np.asarray(image, dtype=float) - np.asarray(ROAD_RGB)
    return (np.sqrt((diff**2).sum(axis=-1)) <= tolerance).astype(np.uint8)


def constraint_fidelity(road_mask: np.ndarray, image: np.ndarray) -> float:
    """IoU between an input road mask and roads re-detected in the image."""
    detected = detect_roads(image).astype(bool)
    truth = np.asarray(road_mask).astype(bool)
    union = (detected | truth).sum()
    if union == 0:
        return 1.0
    return float((detected & truth).sum() / union)


@dataclass
class OracleCorpus:
    store: TileStore
    height_bins: BinSpec
    energy_bins: BinSpec
    accepted: dict[str, list[str]] = field(default_factory=dict)  # split -> tile ids
    rejected: list[str] = field(default_factory=list)


def build_oracle_corpus(
    root,
    n_tiles: int = 120,
    seed: int = 0,
    resolution: int = 64,
    defect_rate: float = 0.1,
    qc_threshold: float = 0.25,
) -> OracleCorpus:
    """Generate, ingest, QC and bin-fit a full oracle corpus.

    Splits are assigned 60/20/20 deterministically from the corpus seed; bin
    edges are fit on accepted training tiles only and frozen for the rest.
    """
    store = TileStore(root)
    rng = np.random.default_rng(seed)
    split_draw = rng.uniform(size=n_tiles)
    defect_draw = rng.uniform(size=n_tiles)

    accepted: dict[str, list[str]] = {"train": [], "val": [], "test": []}
    rejected: list[str] = []
    heights, energies = [], []
    for i in range(n_tiles):
        split = "train" if split_draw[i] < 0.6 else ("val" if split_draw[i] < 0.8 else "test")
        spec = OracleTileSpec(
            seed=seed * 1_000_000 + i,
            resolution=resolution,
            defect=bool(defect_draw[i] < defect_rate),
        )
        tile = generate_tile(spec)
        decision = qc_filter(tile, qc_threshold)
        tile.qc = decision.status
        store.save_tile(tile, split=split)
        if decision.status is QCStatus.ACCEPTED:
            accepted[split].append(tile.tile_id)
            if split == "train":
                heights.append(tile.height_map[tile.height_map > 0])
                energies.append(tile.energy_map[tile.energy_map > 0])
        else:
            rejected.append(tile.tile_id)

    height_bins = fit_bins(np.concatenate(heights), "height_quintile_4")
    energy_bins = fit_bins(np.concatenate(energies), "energy_tertile")
    height_bins.save(store.root / "bins_height.json")
    energy_bins.save(store.root / "bins_energy.json")
    return OracleCorpus(
        store=store,
        height_bins=height_bins,
        energy_bins=energy_bins,
        accepted=accepted,
        rejected=rejected,
    )
