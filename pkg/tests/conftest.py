import numpy as np
import pytest

from vslide.container import create_slide
from vslide.model import (
    ChunkShape,
    LayoutKind,
    MosaicShape,
    SlideHeader,
    StagePosition,
    TileShape,
    build_fovs,
)

PITCH_NM = 162.5


def make_header(layout=LayoutKind.LINEAR, rows=3, cols=4, tile=(64, 48, 3),
                codec=("BITSHUFFLE16", "DEFLATE"), mip_levels=(1,),
                present=None, chunk_div=1, overlap=0.0, shear_px=0.0,
                slide_id="test", attributes=None):
    """Header with a regular (optionally sparse/overlapped/sheared) mosaic."""
    h, w, nw = tile
    mosaic = MosaicShape(rows, cols)
    um = PITCH_NM / 1000.0
    entries = [
        (r, c, StagePosition((c * w * (1 - overlap) + r * shear_px) * um,
                             r * h * (1 - overlap) * um))
        for r in range(rows) for c in range(cols)
        if present is None or (r, c) in present
    ]
    fovs = build_fovs(mosaic, entries, PITCH_NM)
    if layout is LayoutKind.PACKED2D:
        chunk = ChunkShape(h // chunk_div, w // chunk_div)
    else:
        chunk = ChunkShape(h, w)
    return SlideHeader(
        slide_id=slide_id, mosaic=mosaic, tile=TileShape(h, w, nw),
        pixel_pitch_nm=PITCH_NM, layout=layout, chunk=chunk,
        codec_chain=tuple(codec), mip_levels=tuple(mip_levels),
        fovs=tuple(fovs), attributes=dict(attributes or {}),
    )


def random_planes(header, seed=0, dynamic=65536):
    rng = np.random.default_rng(seed)
    tile = header.tile
    return {
        f.linear_index: rng.integers(0, dynamic,
                                     (tile.colours, tile.height, tile.width)
                                     ).astype(np.uint16)
        for f in header.fovs
    }


def write_slide(path, header, data):
    with create_slide(path, header) as writer:
        for fov in header.fovs:
            writer.write_fov(fov, data[fov.linear_index])
    return path


@pytest.fixture
def small_slide(tmp_path):
    header = make_header()
    data = random_planes(header, seed=42)
    path = tmp_path / "small.vsf"
    write_slide(path, header, data)
    return path, header, data
