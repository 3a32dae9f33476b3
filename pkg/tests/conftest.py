import numpy as np
import pytest

from urbansynth.tiles import BoundingBox, DensityMetrics, Tile

BBOX = BoundingBox(west=-74.02, south=40.70, east=-74.00, north=40.72)


def make_tile(
    tile_id="t0000",
    city="testville",
    size=32,
    height=None,
    energy=None,
    null_mask=None,
    seed=0,
):
    rng = np.random.default_rng(seed)
    if height is not None:
        size = np.asarray(height).shape[0]
    if height is None:
        height = np.zeros((size, size), dtype=np.float32)
        height[4:12, 4:12] = 10.0
        height[20:28, 16:28] = 30.0
    if energy is None:
        energy = np.where(height > 0, np.log1p(height * 50.0), 0.0).astype(np.float32)
    if null_mask is not None:
        energy = energy.copy()
        energy[null_mask] = 0.0
    image = rng.uniform(0.2, 0.8, size=(size, size, 3)).astype(np.float32)
    constraints = np.zeros((size, size, 3), dtype=np.uint8)
    constraints[size // 2, :, 2] = 1
    return Tile(
        tile_id=tile_id,
        city=city,
        bbox=BBOX,
        image=image,
        constraint_mask=constraints,
        height_map=np.asarray(height, dtype=np.float32),
        energy_map=np.asarray(energy, dtype=np.float32),
        density=DensityMetrics(bcr=20.0, bvd=3.0, rd=10.0),
        energy_null_mask=null_mask,
    )


@pytest.fixture
def tile():
    return make_tile()
