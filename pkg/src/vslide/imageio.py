"""Deterministic PNG encoding (frames must be bit-identical across paths)."""

import io

import numpy as np
from PIL import Image

# pinned so local and remote render paths emit identical bytes
_COMPRESS_LEVEL = 6


def png_bytes(rgb: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8), mode="RGB").save(
        buf, format="PNG", compress_level=_COMPRESS_LEVEL, optimize=False)
    return buf.getvalue()
