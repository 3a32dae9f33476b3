"""Loader for the published multi-city dataset layout.

The dataset itself (licensed imagery, municipal disclosure records) is not
fetched here; this module understands its directory layout and ships the
per-city manifests, so the city-level accepted-tile statistics load without
a download. A full local copy plugs in through the same TileStore layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .model import QCStatus

CITY_NAMES = ("new_york_city", "boston", "lyon", "busan")

# city -> (total tiles, accepted after review)
EXPECTED_CITY_COUNTS = {
    "new_york_city": (1589, 579),
    "boston": (2051, 526),
    "lyon": (1412, 687),
    "busan": (1438, 996),
}


@dataclass(frozen=True)
class CityStats:
    city: str
    total: int
    accepted: int


def _manifest_text(city: str, manifest_dir: str | Path | None) -> str:
    if manifest_dir is not None:
        return (Path(manifest_dir) / f"{city}.tsv").read_text()
    ref = resources.files("urbansynth.data.muse_manifests").joinpath(f"{city}.tsv")
    return ref.read_text()


def load_city_manifest(city: str, manifest_dir: str | Path | None = None) -> dict[str, QCStatus]:
    """Read one city's manifest: tile_id -> qc status."""
    if city not in CITY_NAMES:
        raise ValueError(f"unknown city {city!r}, expected one of {CITY_NAMES}")
    entries: dict[str, QCStatus] = {}
    for line in _manifest_text(city, manifest_dir).splitlines():
        if not line.strip() or line.startswith("tile_id"):
            continue
        tile_id, qc = line.split("\t")
        entries[tile_id] = QCStatus(qc)
    return entries


def city_statistics(manifest_dir: str | Path | None = None) -> dict[str, CityStats]:
    """Per-city totals and accepted counts from the shipped (or given) manifests."""
    stats = {}
    for city in CITY_NAMES:
        manifest = load_city_manifest(city, manifest_dir)
        accepted = sum(1 for s in manifest.values() if s is QCStatus.ACCEPTED)
        stats[city] = CityStats(city=city, total=len(manifest), accepted=accepted)
    return stats


def verify_city_counts(manifest_dir: str | Path | None = None) -> dict[str, CityStats]:
    """Assert the manifests reproduce the published per-city accepted counts."""
    stats = city_statistics(manifest_dir)
    for city, (total, accepted) in EXPECTED_CITY_COUNTS.items():
        got = stats[city]
        if (got.total, got.accepted) != (total, accepted):
            raise AssertionError(
                f"{city}: manifest has {got.accepted}/{got.total} accepted, "
                f"published statistics say {accepted}/{total}"
            )
    return stats
