"""Raster wire formats.

Imagery and binary masks travel as PNG. Float32 layers use a compact binary
format (documented in docs/api.md):

    bytes 0..7    magic b"USYNRAS1"
    bytes 8..11   height, uint32 little-endian
    bytes 12..15  width, uint32 little-endian
    bytes 16..31  layer kind, ASCII padded with NUL
    bytes 32..    zlib-compressed float32 little-endian grid, row-major
"""

from __future__ import annotations

import io
import struct
import zlib

import numpy as np
from PIL import Image

FLOAT_RASTER_MAGIC = b"USYNRAS1"
_KIND_BYTES = 16


def encode_float_raster(grid: np.ndarray, kind: str) -> bytes:
    grid = np.asarray(grid, dtype="<f4")
    if grid.ndim != 2:
        raise ValueError(f"float raster must be 2-D, got shape {grid.shape}")
    kind_b = kind.encode("ascii")
    if len(kind_b) > _KIND_BYTES:
        raise ValueError(f"layer kind {kind!r} longer than {_KIND_BYTES} bytes")
    header = FLOAT_RASTER_MAGIC + struct.pack("<II", *grid.shape) + kind_b.ljust(_KIND_BYTES, b"\0")
    return header + zlib.compress(grid.tobytes(), level=6)


def decode_float_raster(payload: bytes) -> tuple[np.ndarray, str]:
    if payload[:8] != FLOAT_RASTER_MAGIC:
        raise ValueError("bad magic; not a float raster payload")
    h, w = struct.unpack("<II", payload[8:16])
    kind = payload[16:32].rstrip(b"\0").decode("ascii")
    data = zlib.decompress(payload[32:])
    if len(data) != h * w * 4:
        raise ValueError(f"payload length {len(data)} does not match {h}x{w} float32 grid")
    return np.frombuffer(data, dtype="<f4").reshape(h, w).copy(), kind


def image_to_png_bytes(image: np.ndarray) -> bytes:
    """(h, w, 3) float in [0,1] -> 8-bit RGB PNG bytes."""
    arr = np.clip(np.round(np.asarray(image) * 255), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, "RGB").save(buf, format="PNG")
    return buf.getvalue()


def mask_to_png_bytes(mask: np.ndarray) -> bytes:
    """(h, w, 3) binary constraint mask -> 8-bit RGB PNG bytes."""
    arr = (np.asarray(mask) > 0).astype(np.uint8) * 255
    buf = io.BytesIO()
    Image.fromarray(arr, "RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_array(payload: bytes) -> np.ndarray:
    return np.asarray(Image.open(io.BytesIO(payload)))
