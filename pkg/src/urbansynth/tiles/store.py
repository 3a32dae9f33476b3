"""On-disk tile store.

Layout: <root>/<city>/<tile_id>/{image.png, constraints.png, height.npy,
energy.npy, meta.json} plus a tab-separated manifest of (tile_id, city,
split, qc) at <root>/manifest.tsv. Imagery is 8-bit RGB, physical layers are
float32 (NaN marks a missing energy annotation), constraint masks are 8-bit
multi-channel PNG. Tiles are immutable after ingestion; writing an existing
tile id without overwrite is an error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .model import BoundingBox, DensityMetrics, QCStatus, Tile
from .prompts import render_prompt

MANIFEST_NAME = "manifest.tsv"
LAYERS = ("image", "constraints", "height", "energy", "meta")


@dataclass(frozen=True)
class ManifestRow:
    tile_id: str
    city: str
    split: str  # train | val | test
    qc: QCStatus


class TileStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    # -- paths ------------------------------------------------------------

    def tile_dir(self, city: str, tile_id: str) -> Path:
        return self.root / city / tile_id

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST_NAME

    # -- write ------------------------------------------------------------

    def save_tile(self, tile: Tile, split: str, overwrite: bool = False) -> Path:
        tdir = self.tile_dir(tile.city, tile.tile_id)
        if tdir.exists() and not overwrite:
            raise FileExistsError(
                f"tile {tile.tile_id} already ingested; concurrent or repeated "
                f"writers to one tile id are an error"
            )
        tdir.mkdir(parents=True, exist_ok=True)

        img8 = np.clip(np.round(tile.image * 255), 0, 255).astype(np.uint8)
        Image.fromarray(img8, "RGB").save(tdir / "image.png")
        Image.fromarray(tile.constraint_mask.astype(np.uint8) * 255, "RGB").save(
            tdir / "constraints.png"
        )
        np.save(tdir / "height.npy", tile.height_map.astype(np.float32))
        energy = tile.energy_map.astype(np.float32).copy()
        if tile.energy_null_mask is not None:
            energy[tile.energy_null_mask] = np.nan
        np.save(tdir / "energy.npy", energy)

        meta = {
            "tile_id": tile.tile_id,
            "city": tile.city,
            "bbox": [tile.bbox.west, tile.bbox.south, tile.bbox.east, tile.bbox.north],
            "density": {"bcr": tile.density.bcr, "bvd": tile.density.bvd, "rd": tile.density.rd},
            "qc": tile.qc.value,
            "prompt": render_prompt(tile.city, tile.density),
        }
        (tdir / "meta.json").write_text(json.dumps(meta, indent=2))
        self._upsert_manifest(ManifestRow(tile.tile_id, tile.city, split, tile.qc))
        return tdir

    def set_qc(self, tile_id: str, status: QCStatus, reason: str = "") -> None:
        rows = self.read_manifest()
        by_id = {r.tile_id: r for r in rows}
        if tile_id not in by_id:
            raise KeyError(f"tile {tile_id} not in manifest")
        row = by_id[tile_id]
        by_id[tile_id] = ManifestRow(row.tile_id, row.city, row.split, status)
        self._write_manifest(list(by_id.values()))
        tdir = self.tile_dir(row.city, tile_id)
        meta = json.loads((tdir / "meta.json").read_text())
        meta["qc"] = status.value
        if reason:
            meta["qc_reason"] = reason
        (tdir / "meta.json").write_text(json.dumps(meta, indent=2))

    # -- read -------------------------------------------------------------

    def load_tile(self, tile_id: str) -> Tile:
        row = self._find(tile_id)
        tdir = self.tile_dir(row.city, tile_id)
        if not tdir.exists():
            raise FileNotFoundError(f"tile directory missing for {tile_id}")
        meta = json.loads((tdir / "meta.json").read_text())
        image = np.asarray(Image.open(tdir / "image.png"), dtype=np.float32) / 255.0
        constraints = (np.asarray(Image.open(tdir / "constraints.png")) > 127).astype(np.uint8)
        height = np.load(tdir / "height.npy")
        energy_raw = np.load(tdir / "energy.npy")
        null_mask = np.isnan(energy_raw)
        energy = np.nan_to_num(energy_raw, nan=0.0)
        return Tile(
            tile_id=meta["tile_id"],
            city=meta["city"],
            bbox=BoundingBox(*meta["bbox"]),
            image=image,
            constraint_mask=constraints,
            height_map=height,
            energy_map=energy,
            density=DensityMetrics(**meta["density"]),
            qc=QCStatus(meta["qc"]),
            energy_null_mask=null_mask if null_mask.any() else None,
        )

    def read_manifest(self) -> list[ManifestRow]:
        if not self.manifest_path.exists():
            return []
        rows = []
        for line in self.manifest_path.read_text().splitlines():
            if not line.strip() or line.startswith("tile_id"):
                continue
            tile_id, city, split, qc = line.split("\t")
            rows.append(ManifestRow(tile_id, city, split, QCStatus(qc)))
        return rows

    def tile_ids(self, split: str | None = None, qc: QCStatus | None = None) -> list[str]:
        return [
            r.tile_id
            for r in self.read_manifest()
            if (split is None or r.split == split) and (qc is None or r.qc == qc)
        ]

    def iter_tiles(self, split: str | None = None, qc: QCStatus | None = None) -> Iterator[Tile]:
        for tile_id in self.tile_ids(split=split, qc=qc):
            yield self.load_tile(tile_id)

    # -- internals ----------------------------------------------------------

    def _find(self, tile_id: str) -> ManifestRow:
        for row in self.read_manifest():
            if row.tile_id == tile_id:
                return row
        raise KeyError(f"tile {tile_id} not in manifest")

    def _upsert_manifest(self, new: ManifestRow) -> None:
        rows = [r for r in self.read_manifest() if r.tile_id != new.tile_id]
        rows.append(new)
        self._write_manifest(rows)

    def _write_manifest(self, rows: list[ManifestRow]) -> None:
        rows = sorted(rows, key=lambda r: (r.city, r.tile_id))
        lines = ["tile_id\tcity\tsplit\tqc"]
        lines += [f"{r.tile_id}\t{r.city}\t{r.split}\t{r.qc.value}" for r in rows]
        self.manifest_path.write_text("\n".join(lines) + "\n")
