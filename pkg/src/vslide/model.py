"""Domain types for virtual slides and the index arithmetic of the storage layouts.

Coordinates live in three frames: stage micrometres (where the motorized
stage records positions), slide pixels (the reconstructed image frame) and
mosaic indices (r, c).  The conversion stage -> slide pixel divides by the
pixel pitch and rounds half away from zero.
"""

from __future__ import annotations

import enum
import math
from bisect import bisect_left
from dataclasses import dataclass, field

from .errors import DomainError

__all__ = [
    "MosaicShape",
    "TileShape",
    "StagePosition",
    "FieldOfView",
    "SlideHeader",
    "LayoutKind",
    "ChunkShape",
    "Rect",
    "pixel_pitch_from_optics",
    "linear_index",
    "linear_slab_rows",
    "linear_plane_row",
    "sparse_lookup",
    "fov_bounds",
    "round_half_away",
    "assign_pixel_origins",
    "build_fovs",
]


def round_half_away(value: float) -> int:
    """Round to nearest integer, halves away from zero (platform independent)."""
    return int(math.floor(value + 0.5)) if value >= 0 else int(math.ceil(value - 0.5))


class LayoutKind(str, enum.Enum):
    PACKED2D = "PACKED2D"  # one dataset (R*Nw*H, C*W), chunk (h, w)
    LINEAR = "LINEAR"      # one dataset (R*C*Nw*H, W), one chunk per colour plane
    PER_TILE = "PER_TILE"  # dataset (R, C, Nw, H, W), chunk (1, 1, 1, H, W)


@dataclass(frozen=True)
class MosaicShape:
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise DomainError(f"mosaic shape must be >= 1x1, got {self.rows}x{self.cols}")


@dataclass(frozen=True)
class TileShape:
    height: int
    width: int
    colours: int = 1
    # samples are always unsigned 16-bit

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise DomainError(f"tile shape must be >= 1x1, got {self.height}x{self.width}")
        if not 1 <= self.colours <= 8:
            raise DomainError(f"colour plane count must be in [1, 8], got {self.colours}")

    @property
    def plane_bytes(self) -> int:
        return self.height * self.width * 2


@dataclass(frozen=True)
class StagePosition:
    x: float  # micrometres
    y: float
    z: float = 0.0

    def __post_init__(self):
        for v in (self.x, self.y, self.z):
            if not math.isfinite(v):
                raise DomainError("stage position must be finite")


@dataclass(frozen=True)
class FieldOfView:
    r: int
    c: int
    linear_index: int
    stage: StagePosition
    pixel_origin: tuple[int, int]  # (x, y) slide px relative to mosaic origin


@dataclass(frozen=True)
class ChunkShape:
    h: int
    w: int

    def __post_init__(self):
        if self.h < 1 or self.w < 1:
            raise DomainError("chunk shape must be >= 1x1")


@dataclass(frozen=True)
class Rect:
    """Axis-aligned half-open rectangle [x0, x1) x [y0, y1) in slide pixels."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise DomainError(f"degenerate rect {self}")

    def intersects(self, other: "Rect") -> bool:
        return (self.x0 < other.x1 and other.x0 < self.x1
                and self.y0 < other.y1 and other.y0 < self.y1)


def pixel_pitch_from_optics(camera_pixel_um: float, magnification: float) -> float:
    """Slide pixel pitch in nanometres for a camera pixel size and magnification."""
    if camera_pixel_um <= 0 or magnification <= 0:
        raise DomainError("camera pixel size and magnification must be positive")
    return camera_pixel_um * 1000.0 / magnification


def linear_index(r: int, c: int, cols: int) -> int:
    """Storage ordinal r*C + c of mosaic position (r, c)."""
    if r < 0 or c < 0:
        raise DomainError(f"negative mosaic index ({r}, {c})")
    if c >= cols:
        raise DomainError(f"column {c} out of range for {cols} columns")
    return r * cols + c


def linear_slab_rows(lower_index: int, upper_index: int, colours: int, height: int) -> tuple[int, int]:
    """Dataset row range holding fields of view [lower_index, upper_index) in a LINEAR dataset."""
    if lower_index >= upper_index:
        raise DomainError("lower_index must be < upper_index")
    step = colours * height
    return lower_index * step, upper_index * step


def linear_plane_row(i: int, w: int, colours: int, height: int) -> int:
    """Row offset of colour plane w of the i-th field of view inside a LINEAR slab."""
    return i * colours * height + w * height


def sparse_lookup(linear_indices, r: int, c: int, cols: int):
    """Ordinal of the field of view (r, c) in a sorted sparse table, or None.

    `linear_indices` is the sorted sequence of linear indices actually present.
    """
    target = linear_index(r, c, cols)
    pos = bisect_left(linear_indices, target)
    if pos < len(linear_indices) and linear_indices[pos] == target:
        return pos
    return None


def fov_bounds(fov: FieldOfView, tile: TileShape) -> Rect:
    """Boundary rectangle of a tile in slide pixels, half-open."""
    x0, y0 = fov.pixel_origin
    return Rect(x0, y0, x0 + tile.width, y0 + tile.height)


def assign_pixel_origins(stages: list[StagePosition], pixel_pitch_nm: float) -> list[tuple[int, int]]:
    """Stage positions (micrometres) -> slide pixel origins, shifted so the minimum is (0, 0)."""
    if pixel_pitch_nm <= 0:
        raise DomainError("pixel pitch must be positive")
    raw = [
        (round_half_away(s.x * 1000.0 / pixel_pitch_nm),
         round_half_away(s.y * 1000.0 / pixel_pitch_nm))
        for s in stages
    ]
    if not raw:
        return []
    min_x = min(p[0] for p in raw)
    min_y = min(p[1] for p in raw)
    return [(x - min_x, y - min_y) for x, y in raw]


def build_fovs(mosaic: MosaicShape, entries: list[tuple[int, int, StagePosition]],
               pixel_pitch_nm: float) -> list[FieldOfView]:
    """FieldOfView records for (r, c, stage) triples, sorted by linear index."""
    entries = sorted(entries, key=lambda e: linear_index(e[0], e[1], mosaic.cols))
    origins = assign_pixel_origins([e[2] for e in entries], pixel_pitch_nm)
    fovs = []
    seen = set()
    for (r, c, stage), origin in zip(entries, origins):
        if r >= mosaic.rows:
            raise DomainError(f"row {r} out of range for {mosaic.rows} rows")
        li = linear_index(r, c, mosaic.cols)
        if li in seen:
            raise DomainError(f"duplicate field of view ({r}, {c})")
        seen.add(li)
        fovs.append(FieldOfView(r=r, c=c, linear_index=li, stage=stage, pixel_origin=origin))
    return fovs


@dataclass(frozen=True)
class SlideHeader:
    """Everything needed to interpret a virtual slide: identity, shapes, layout, codec."""

    slide_id: str
    mosaic: MosaicShape
    tile: TileShape
    pixel_pitch_nm: float
    layout: LayoutKind
    chunk: ChunkShape
    codec_chain: tuple[str, ...]
    colour_names: tuple[str, ...] = ()
    mip_levels: tuple[int, ...] = (1,)
    fovs: tuple[FieldOfView, ...] = ()
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.pixel_pitch_nm <= 0:
            raise DomainError("pixel pitch must be positive")
        levels = tuple(self.mip_levels)
        if not levels or levels[0] != 1 or list(levels) != sorted(set(levels)):
            raise DomainError(f"mip levels must be strictly increasing and start at 1: {levels}")
        if self.colour_names and len(self.colour_names) != self.tile.colours:
            raise DomainError("colour_names length must match colour plane count")
        if self.layout is LayoutKind.PACKED2D:
            h, w = self.chunk.h, self.chunk.w
            if self.tile.height % h or self.tile.width % w:
                raise DomainError("PACKED2D chunk must divide the tile shape")
            if self.tile.height // h != self.tile.width // w:
                raise DomainError("PACKED2D requires (H, W) = (n*h, n*w) for one n")
        else:
            if (self.chunk.h, self.chunk.w) != (self.tile.height, self.tile.width):
                raise DomainError(f"{self.layout.value} chunk must equal one colour plane")
        lis = [f.linear_index for f in self.fovs]
        if lis != sorted(set(lis)):
            raise DomainError("fov table must be strictly increasing in linear_index")
        for f in self.fovs:
            if not (0 <= f.r < self.mosaic.rows and 0 <= f.c < self.mosaic.cols):
                raise DomainError(f"fov ({f.r}, {f.c}) outside mosaic")
            if f.linear_index != f.r * self.mosaic.cols + f.c:
                raise DomainError("fov linear_index inconsistent with (r, c)")

    @property
    def packing_factor(self) -> int:
        """n such that (H, W) = (n*h, n*w); 1 for plane-chunked layouts."""
        return self.tile.height // self.chunk.h

    def fov_ordinal(self, r: int, c: int):
        return sparse_lookup([f.linear_index for f in self.fovs], r, c, self.mosaic.cols)

    def fov_at(self, r: int, c: int):
        pos = self.fov_ordinal(r, c)
        return self.fovs[pos] if pos is not None else None

    # -- JSON (canonical form used by the container and the wire protocol) --

    def to_json_dict(self) -> dict:
        return {
            "slide_id": self.slide_id,
            "attributes": dict(self.attributes),
            "mosaic": {"rows": self.mosaic.rows, "cols": self.mosaic.cols},
            "tile": {"height": self.tile.height, "width": self.tile.width,
                     "colours": self.tile.colours},
            "pixel_pitch_nm": self.pixel_pitch_nm,
            "colour_names": list(self.colour_names),
            "layout": self.layout.value,
            "chunk": {"h": self.chunk.h, "w": self.chunk.w},
            "codec_chain": list(self.codec_chain),
            "mip_levels": list(self.mip_levels),
            "fovs": [
                {"r": f.r, "c": f.c, "linear_index": f.linear_index,
                 "stage": [f.stage.x, f.stage.y, f.stage.z],
                 "pixel_origin": list(f.pixel_origin)}
                for f in self.fovs
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SlideHeader":
        fovs = tuple(
            FieldOfView(
                r=f["r"], c=f["c"], linear_index=f["linear_index"],
                stage=StagePosition(*f["stage"]),
                pixel_origin=(f["pixel_origin"][0], f["pixel_origin"][1]),
            )
            for f in d["fovs"]
        )
        return cls(
            slide_id=d["slide_id"],
            attributes=dict(d["attributes"]),
            mosaic=MosaicShape(d["mosaic"]["rows"], d["mosaic"]["cols"]),
            tile=TileShape(d["tile"]["height"], d["tile"]["width"], d["tile"]["colours"]),
            pixel_pitch_nm=d["pixel_pitch_nm"],
            colour_names=tuple(d["colour_names"]),
            layout=LayoutKind(d["layout"]),
            chunk=ChunkShape(d["chunk"]["h"], d["chunk"]["w"]),
            codec_chain=tuple(d["codec_chain"]),
            mip_levels=tuple(d["mip_levels"]),
            fovs=fovs,
        )

    def with_mip_levels(self, levels) -> "SlideHeader":
        d = self.to_json_dict()
        d["mip_levels"] = sorted(set([1, *levels]))
        return SlideHeader.from_json_dict(d)
