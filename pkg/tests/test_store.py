import numpy as np
import pytest

from urbansynth.tiles import QCStatus, TileStore
from urbansynth.tiles.muse import EXPECTED_CITY_COUNTS, city_statistics, verify_city_counts

from conftest import make_tile


def test_save_load_round_trip(tmp_path):
    store = TileStore(tmp_path)
    tile = make_tile()
    store.save_tile(tile, split="train")

    loaded = store.load_tile("t0000")
    assert loaded.tile_id == tile.tile_id
    assert loaded.city == tile.city
    assert loaded.bbox == tile.bbox
    assert loaded.density == tile.density
    # float layers are lossless, imagery is 8-bit quantized
    np.testing.assert_array_equal(loaded.height_map, tile.height_map)
    np.testing.assert_array_equal(loaded.energy_map, tile.energy_map)
    np.testing.assert_array_equal(loaded.constraint_mask, tile.constraint_mask)
    assert np.abs(loaded.image - tile.image).max() <= 0.5 / 255


def test_null_sentinel_survives_round_trip(tmp_path):
    null = np.zeros((32, 32), dtype=bool)
    null[5:9, 5:9] = True
    tile = make_tile(null_mask=null)
    store = TileStore(tmp_path)
    store.save_tile(tile, split="train")
    loaded = store.load_tile("t0000")
    np.testing.assert_array_equal(loaded.energy_null_mask, null)
    assert np.all(loaded.energy_map[null] == 0)


def test_double_ingest_is_an_error(tmp_path):
    store = TileStore(tmp_path)
    store.save_tile(make_tile(), split="train")
    with pytest.raises(FileExistsError):
        store.save_tile(make_tile(), split="train")


def test_manifest_and_qc_update(tmp_path):
    store = TileStore(tmp_path)
    store.save_tile(make_tile(tile_id="a"), split="train")
    store.save_tile(make_tile(tile_id="b"), split="test")
    assert store.tile_ids(split="train") == ["a"]
    store.set_qc("a", QCStatus.REJECTED, reason="missing block")
    rows = {r.tile_id: r for r in store.read_manifest()}
    assert rows["a"].qc is QCStatus.REJECTED
    assert rows["b"].qc is QCStatus.UNREVIEWED
    assert store.tile_ids(qc=QCStatus.REJECTED) == ["a"]


def test_missing_tile_raises(tmp_path):
    store = TileStore(tmp_path)
    with pytest.raises(KeyError):
        store.load_tile("nope")


class TestPublishedManifests:
    def test_city_counts_match_published_statistics(self):
        stats = city_statistics()
        for city, (total, accepted) in EXPECTED_CITY_COUNTS.items():
            assert stats[city].total == total
            assert stats[city].accepted == accepted

    def test_verify_passes_on_shipped_manifests(self):
        verify_city_counts()

    def test_verify_fails_on_corrupted_manifest(self, tmp_path):
        for city in EXPECTED_CITY_COUNTS:
            (tmp_path / f"{city}.tsv").write_text("tile_id\tqc\nx_0\taccepted\n")
        with pytest.raises(AssertionError):
            verify_city_counts(tmp_path)
