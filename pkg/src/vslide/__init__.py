"""vslide: gigapixel virtual-slide storage, serving and CPU rendering."""

from .codec import BACKEND as CODEC_BACKEND
from .container import ALL, create_slide, open_slide
from .errors import VslideError
from .model import (
    ChunkShape,
    FieldOfView,
    LayoutKind,
    MosaicShape,
    SlideHeader,
    StagePosition,
    TileShape,
)

__version__ = "0.1.0"

__all__ = [
    "ALL",
    "CODEC_BACKEND",
    "ChunkShape",
    "FieldOfView",
    "LayoutKind",
    "MosaicShape",
    "SlideHeader",
    "StagePosition",
    "TileShape",
    "VslideError",
    "create_slide",
    "open_slide",
    "__version__",
]
