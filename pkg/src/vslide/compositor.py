"""CPU compositor: viewport transform, luminance normalization, status/mixer
colour processing, gamma, nearest-neighbour sampling, mip levels and zoom
management, plus per-tile detection pipelines.

Overlapping tiles are resolved in painter order: the tile with the greatest
linear index wins.  All operations are pure, so renders are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError
from .mip import mignify, mip_dims  # noqa: F401  (mignify is part of this module's API)
from .model import Rect, fov_bounds

# ---------------------------------------------------------------------------
# parameter types


@dataclass(frozen=True)
class ViewportRect:
    x_inf: float
    x_sup: float
    y_inf: float
    y_sup: float

    def __post_init__(self):
        if not (self.x_inf < self.x_sup and self.y_inf < self.y_sup):
            raise DomainError(f"degenerate viewport {self}")

    @property
    def rect(self) -> Rect:
        return Rect(self.x_inf, self.y_inf, self.x_sup, self.y_sup)


@dataclass(frozen=True)
class ContrastWindow:
    i_inf: int
    i_sup: int

    def __post_init__(self):
        if not 0 <= self.i_inf < self.i_sup < 2 ** 16:
            raise DomainError(f"contrast window must satisfy 0 <= inf < sup < 65536: {self}")


@dataclass(frozen=True)
class RenderParams:
    contrast: tuple[ContrastWindow, ...]
    status: tuple[int, ...]
    mixer: tuple[tuple[float, ...], ...]  # 3 x Nw, non-negative
    gamma: float = 1.0
    level: int = 1
    pipeline: str = "raw"

    def __post_init__(self):
        nw = len(self.contrast)
        if len(self.status) != nw or any(s not in (0, 1) for s in self.status):
            raise DomainError("status vector must be binary, one entry per colour")
        m = np.asarray(self.mixer, dtype=float)
        if m.shape != (3, nw) or not np.isfinite(m).all() or (m < 0).any():
            raise DomainError(f"mixer must be a non-negative finite 3x{nw} matrix")
        if not self.gamma > 0:
            raise DomainError("gamma must be positive")

    @property
    def colours(self) -> int:
        return len(self.contrast)


def default_mixer(colours: int) -> tuple[tuple[float, ...], ...]:
    """3 x Nw mixer: grayscale for 1 colour, channel->primary for 2-3,
    the fourth channel spread over all primaries with weight 1/3."""
    m = np.zeros((3, colours))
    if colours == 1:
        m[:, 0] = 1.0
    else:
        for i in range(min(colours, 3)):
            m[i, i] = 1.0
        for i in range(3, colours):
            m[:, i] = 1.0 / 3.0
    return tuple(tuple(float(v) for v in row) for row in m)


def default_params(colours: int, level: int = 1, pipeline: str = "raw") -> RenderParams:
    return RenderParams(
        contrast=tuple(ContrastWindow(0, 65535) for _ in range(colours)),
        status=tuple(1 for _ in range(colours)),
        mixer=default_mixer(colours),
        gamma=1.0,
        level=level,
        pipeline=pipeline,
    )


# ---------------------------------------------------------------------------
# rendering math


def ndc_map(viewport: ViewportRect, point) -> tuple[float, float]:
    """Slide coordinate -> normalized device coordinate; visible iff both in [-1, 1]."""
    xs, ys = point
    x = (2.0 * xs - (viewport.x_inf + viewport.x_sup)) / (viewport.x_sup - viewport.x_inf)
    y = (2.0 * ys - (viewport.y_inf + viewport.y_sup)) / (viewport.y_sup - viewport.y_inf)
    return x, y


def normalize(luminance, window: ContrastWindow):
    """Raw intensity -> [0, 1] with clamping outside the contrast window."""
    l = np.asarray(luminance, dtype=np.float64)
    out = (l - window.i_inf) / (window.i_sup - window.i_inf)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if np.isscalar(luminance) else out


def _gamma_apply(values: np.ndarray, gamma: float) -> np.ndarray:
    if gamma == 1.0:
        return values
    return np.power(values, 1.0 / gamma)


def mix(params: RenderParams, lhat) -> tuple[float, float, float]:
    """Normalized channel vector -> clamped (r, g, b)."""
    v = np.asarray(lhat, dtype=np.float64)
    if v.shape != (params.colours,):
        raise DomainError(f"expected {params.colours} channel values, got shape {v.shape}")
    v = _gamma_apply(np.clip(v, 0.0, 1.0), params.gamma) * np.asarray(params.status, float)
    rgb = np.clip(np.asarray(params.mixer, float) @ v, 0.0, 1.0)
    return (float(rgb[0]), float(rgb[1]), float(rgb[2]))


def mix_planes(params: RenderParams, planes: np.ndarray) -> np.ndarray:
    """Raw u16 planes (Nw, h, w) -> float RGB (h, w, 3); normalize, gamma, status, mixer."""
    norm = np.stack([normalize(planes[i], params.contrast[i])
                     for i in range(params.colours)])
    norm = _gamma_apply(norm, params.gamma)
    norm *= np.asarray(params.status, float)[:, None, None]
    rgb = np.tensordot(np.asarray(params.mixer, float), norm, axes=([1], [0]))
    return np.clip(np.moveaxis(rgb, 0, -1), 0.0, 1.0)


def quantize_u8(rgb: np.ndarray) -> np.ndarray:
    """[0,1] floats -> u8, round half away from zero (values are non-negative)."""
    return np.floor(rgb * 255.0 + 0.5).astype(np.uint8)


def params_to_query(params: RenderParams) -> dict[str, str]:
    """RenderParams -> flat string mapping (HTTP query / CLI flags)."""
    return {
        "contrast": ",".join(f"{w.i_inf}:{w.i_sup}" for w in params.contrast),
        "status": ",".join(str(s) for s in params.status),
        "mixer": ";".join(",".join(repr(float(v)) for v in row) for row in params.mixer),
        "gamma": repr(float(params.gamma)),
        "level": str(params.level),
        "pipeline": params.pipeline,
    }


def params_from_query(query: dict, colours: int) -> RenderParams:
    """Inverse of params_to_query; missing keys fall back to defaults."""
    base = default_params(colours)
    contrast = base.contrast
    if "contrast" in query:
        pairs = [p.split(":") for p in query["contrast"].split(",")]
        if len(pairs) != colours:
            raise DomainError(f"expected {colours} contrast windows")
        contrast = tuple(ContrastWindow(int(a), int(b)) for a, b in pairs)
    status = base.status
    if "status" in query:
        status = tuple(int(s) for s in query["status"].split(","))
    mixer = base.mixer
    if "mixer" in query:
        mixer = tuple(tuple(float(v) for v in row.split(","))
                      for row in query["mixer"].split(";"))
    return RenderParams(
        contrast=contrast,
        status=status,
        mixer=mixer,
        gamma=float(query.get("gamma", 1.0)),
        level=int(query.get("level", 1)),
        pipeline=query.get("pipeline", "raw"),
    )


# ---------------------------------------------------------------------------
# zoom management


@dataclass(frozen=True)
class ZoomPolicy:
    levels: tuple[int, ...] = (1,)
    excluded: tuple[tuple[float, float], ...] = ()  # open intervals of scale
    min_scale: float = 1e-6
    max_scale: float = 64.0

    def __post_init__(self):
        if 1 not in self.levels:
            raise DomainError("level 1 must be available")
        spans = sorted(self.excluded)
        for (a0, b0), (a1, b1) in zip(spans, spans[1:]):
            if a1 < b0:
                raise DomainError("excluded zoom ranges must be disjoint")
        for a, b in spans:
            if not a < b:
                raise DomainError(f"empty excluded range ({a}, {b})")


def snap_scale(policy: ZoomPolicy, scale: float, direction: int = 0) -> float:
    """Clamp to the legal range, then push out of excluded ranges.

    direction > 0 means zooming in (scale increasing): snap upward;
    direction < 0 snaps downward; 0 snaps to the nearest boundary.
    """
    if scale <= 0:
        raise DomainError("scale must be positive")
    scale = min(max(scale, policy.min_scale), policy.max_scale)
    for a, b in policy.excluded:
        if a < scale < b:
            if direction > 0:
                scale = b
            elif direction < 0:
                scale = a
            else:
                scale = a if scale - a <= b - scale else b
            break
    return min(max(scale, policy.min_scale), policy.max_scale)


def choose_level(policy: ZoomPolicy, scale: float, direction: int = 0) -> int:
    """Active mip level for a display scale: the largest level <= 1/scale, else 1."""
    scale = snap_scale(policy, scale, direction)
    candidates = [lvl for lvl in policy.levels if lvl <= 1.0 / scale]
    return max(candidates) if candidates else 1


# ---------------------------------------------------------------------------
# detection pipelines


@dataclass(frozen=True)
class Pipeline:
    name: str
    fn: object  # (plane u16 2-d) -> plane u16 2-d
    params_override: dict = field(default_factory=dict)


_REGISTRY: dict[tuple[str, int | None], Pipeline] = {}


def register_pipeline(name: str, fn, level: int | None = None, params_override=None):
    _REGISTRY[(name, level)] = Pipeline(name, fn, dict(params_override or {}))


def resolve_pipeline(name: str, level: int | None = None) -> Pipeline:
    for key in ((name, level), (name, None)):
        if key in _REGISTRY:
            return _REGISTRY[key]
    if name == "raw":
        return Pipeline("raw", lambda p: p)
    if name == "invert":
        return Pipeline("invert", lambda p: (65535 - p.astype(np.int32)).astype(np.uint16))
    if name.startswith("threshold:"):
        t = int(name.split(":", 1)[1])
        return Pipeline(name, lambda p: np.where(p >= t, np.uint16(65535), np.uint16(0)))
    raise DomainError(f"unknown pipeline {name!r}")


def apply_pipeline(name: str, plane: np.ndarray, level: int | None = None) -> np.ndarray:
    return resolve_pipeline(name, level).fn(np.asarray(plane, dtype=np.uint16))


# ---------------------------------------------------------------------------
# viewport rendering


def _load_tile_planes(reader, fov, level: int, pipeline: str, cache=None, loaders=None):
    """Level-L planes of one fov, pipeline applied; mignified on the fly when
    the level is not stored."""

    def load():
        if level in reader.header.mip_levels:
            planes = reader.read_fov(fov.r, fov.c, None, level)
        else:
            planes = reader.read_fov(fov.r, fov.c, None, 1)
            if planes is not None:
                planes = np.stack([mignify(p, level) for p in planes])
        if planes is None:
            return None
        return np.stack([apply_pipeline(pipeline, p, level) for p in planes])

    if cache is None:
        return load()
    from .cache import TileKey

    key = TileKey(slide_id=reader.header.slide_id, r=fov.r, c=fov.c,
                  colour=None, level=level, pipeline=pipeline)
    return cache.get_or_load(key, load)


def render_viewport(reader, tree, viewport: ViewportRect, out_size, params: RenderParams,
                    cache=None) -> np.ndarray:
    """Render a viewport to an (Hout, Wout, 3) u8 image.

    Each output pixel samples its slide coordinate (pixel-centre mapping,
    nearest = floor) from the covering tile of greatest linear index;
    uncovered pixels are black.
    """
    wout, hout = out_size
    if wout < 1 or hout < 1:
        raise DomainError("output size must be at least 1x1")
    header = reader.header
    pipe = resolve_pipeline(params.pipeline, params.level)
    if pipe.params_override:
        params = replace(params, **pipe.params_override)
    level = params.level
    out = np.zeros((hout, wout, 3), dtype=np.uint8)

    xs = viewport.x_inf + (np.arange(wout) + 0.5) * (viewport.x_sup - viewport.x_inf) / wout
    ys = viewport.y_inf + (np.arange(hout) + 0.5) * (viewport.y_sup - viewport.y_inf) / hout
    sx = np.floor(xs).astype(np.int64)
    sy = np.floor(ys).astype(np.int64)

    hits = tree.query_intersect(viewport.rect)
    for li in sorted(hits):  # painter order: greatest linear index last
        fov = header.fov_at(li // header.mosaic.cols, li % header.mosaic.cols)
        if fov is None:
            continue
        bounds = fov_bounds(fov, header.tile)
        j0 = int(np.searchsorted(sx, bounds.x0, side="left"))
        j1 = int(np.searchsorted(sx, bounds.x1, side="left"))
        i0 = int(np.searchsorted(sy, bounds.y0, side="left"))
        i1 = int(np.searchsorted(sy, bounds.y1, side="left"))
        if j0 >= j1 or i0 >= i1:
            continue
        planes = _load_tile_planes(reader, fov, level, params.pipeline, cache)
        if planes is None:
            continue
        lh, lw = planes.shape[1:]
        cols = np.minimum((sx[j0:j1] - int(bounds.x0)) // level, lw - 1)
        rows = np.minimum((sy[i0:i1] - int(bounds.y0)) // level, lh - 1)
        tile_rgb = quantize_u8(mix_planes(params, planes[:, rows[:, None], cols[None, :]]))
        out[i0:i1, j0:j1] = tile_rgb
    return out
