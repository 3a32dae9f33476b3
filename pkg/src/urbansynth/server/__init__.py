from .wire import (
    FLOAT_RASTER_MAGIC,
    decode_float_raster,
    encode_float_raster,
    image_to_png_bytes,
    mask_to_png_bytes,
    png_bytes_to_array,
)

__all__ = [
    "FLOAT_RASTER_MAGIC",
    "decode_float_raster",
    "encode_float_raster",
    "image_to_png_bytes",
    "mask_to_png_bytes",
    "png_bytes_to_array",
]
