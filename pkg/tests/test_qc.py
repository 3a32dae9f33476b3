import numpy as np

from urbansynth.tiles import QCStatus, load_overrides, qc_filter
from urbansynth.tiles.qc import largest_missing_block_fraction

from conftest import make_tile


def flood_fill_largest(missing: np.ndarray) -> int:
    """Independent BFS oracle for the largest 4-connected component."""
    h, w = missing.shape
    seen = np.zeros_like(missing, dtype=bool)
    best = 0
    for r0 in range(h):
        for c0 in range(w):
            if not missing[r0, c0] or seen[r0, c0]:
                continue
            stack = [(r0, c0)]
            seen[r0, c0] = True
            size = 0
            while stack:
                r, c = stack.pop()
                size += 1
                for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w and missing[rr, cc] and not seen[rr, cc]:
                        seen[rr, cc] = True
                        stack.append((rr, cc))
            best = max(best, size)
    return best


def test_fully_annotated_tile_accepted(tile):
    decision = qc_filter(tile, max_null_block_fraction=0.25)
    assert decision.status is QCStatus.ACCEPTED
    assert decision.missing_fraction == 0.0


def test_half_missing_block_rejected_at_quarter_threshold():
    size = 32
    height = np.zeros((size, size), dtype=np.float32)
    height[0:16, :] = 12.0  # 512 annotated pixels
    null = np.zeros((size, size), dtype=bool)
    null[0:8, :] = True  # contiguous block over 50% of annotated area
    t = make_tile(height=height, null_mask=null)
    decision = qc_filter(t, max_null_block_fraction=0.25)
    assert decision.status is QCStatus.REJECTED
    assert abs(decision.missing_fraction - 0.5) < 1e-9
    assert "50" in decision.reason


def test_fraction_matches_flood_fill_oracle():
    rng = np.random.default_rng(5)
    for trial in range(10):
        size = 24
        height = (rng.uniform(size=(size, size)) < 0.6).astype(np.float32) * 15.0
        null = (rng.uniform(size=(size, size)) < 0.3) & (height > 0)
        t = make_tile(tile_id=f"t{trial}", height=height, null_mask=null)
        annotated = (t.height_map > 0) | (t.energy_map > 0)
        missing = annotated & (null | (t.energy_map == 0))
        expected = flood_fill_largest(missing) / annotated.sum()
        assert abs(largest_missing_block_fraction(t) - expected) < 1e-12


def test_empty_tile_rejected_for_no_annotations():
    size = 16
    t = make_tile(height=np.zeros((size, size)), energy=np.zeros((size, size)))
    decision = qc_filter(t, max_null_block_fraction=0.25)
    assert decision.status is QCStatus.REJECTED
    assert "no annotated" in decision.reason


def test_override_file_takes_precedence(tmp_path, tile):
    path = tmp_path / "flags.txt"
    path.write_text("# expert flags\nt0000 rejected\nother accepted\n")
    overrides = load_overrides(path)
    decision = qc_filter(tile, max_null_block_fraction=0.25, overrides=overrides)
    assert decision.status is QCStatus.REJECTED
    assert decision.reason == "expert override"


def test_decision_is_pure_function_of_inputs(tile):
    a = qc_filter(tile, 0.25)
    b = qc_filter(tile, 0.25)
    assert a == b
