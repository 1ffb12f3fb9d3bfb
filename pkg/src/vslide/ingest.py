"""Acquisition pipeline: scanner simulator -> bounded proxy FIFO -> slide writer,
plus the session manager service and the file-backed slide catalog.

The scanner is a deterministic simulator: tile content is a pure function of
global slide coordinates, so the overlap strips of neighbouring tiles carry
identical pattern content and reconstruction fixtures are meaningful.
"""

from __future__ import annotations

import json
import os
import queue
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .container import create_slide
from .errors import DomainError
from .model import (
    ChunkShape,
    FieldOfView,
    LayoutKind,
    MosaicShape,
    SlideHeader,
    StagePosition,
    TileShape,
    build_fovs,
)

CODEC_NAMES = {
    "raw": ("RAW",),
    "deflate": ("DEFLATE",),
    "bitshuffle-deflate": ("BITSHUFFLE16", "DEFLATE"),
}


def chain_from_name(name: str) -> tuple[str, ...]:
    if name not in CODEC_NAMES:
        raise DomainError(f"unknown codec {name!r} (choose from {sorted(CODEC_NAMES)})")
    return CODEC_NAMES[name]


@dataclass(frozen=True)
class ScanPlan:
    rows: int
    cols: int
    tile_height: int
    tile_width: int
    colours: int = 1
    overlap: float = 0.1
    shear_px: float = 0.0  # x shift per mosaic row
    pixel_pitch_nm: float = 162.5
    seed: int = 0
    rate: float = 0.0  # tiles per second; 0 = unthrottled
    dynamic: int = 4096  # synthetic intensity range (12-bit default)

    def __post_init__(self):
        MosaicShape(self.rows, self.cols)
        TileShape(self.tile_height, self.tile_width, self.colours)
        if not 0.0 <= self.overlap < 0.5:
            raise DomainError(f"overlap must be in [0, 0.5), got {self.overlap}")
        if self.rate < 0:
            raise DomainError("rate must be >= 0")
        if not 2 <= self.dynamic <= 65536:
            raise DomainError("dynamic must be in [2, 65536]")

    def to_json_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_json_dict(cls, d: dict) -> "ScanPlan":
        allowed = set(cls.__dataclass_fields__)
        unknown = set(d) - allowed
        if unknown:
            raise DomainError(f"unknown plan fields {sorted(unknown)}")
        return cls(**d)

    def stage_position(self, r: int, c: int) -> StagePosition:
        px = c * self.tile_width * (1.0 - self.overlap) + r * self.shear_px
        py = r * self.tile_height * (1.0 - self.overlap)
        um = self.pixel_pitch_nm / 1000.0
        return StagePosition(px * um, py * um)

    def fovs(self) -> list[FieldOfView]:
        mosaic = MosaicShape(self.rows, self.cols)
        entries = [(r, c, self.stage_position(r, c))
                   for r in range(self.rows) for c in range(self.cols)]
        return build_fovs(mosaic, entries, self.pixel_pitch_nm)


def _hash_noise(xs: np.ndarray, ys: np.ndarray, salt: int) -> np.ndarray:
    """Cheap per-pixel integer hash (deterministic across runs and platforms)."""
    salt_mix = np.uint32((salt * 0xC2B2AE3D) & 0xFFFFFFFF)
    with np.errstate(over="ignore"):  # uint32 wraparound is the point
        h = (xs.astype(np.uint32) * np.uint32(0x9E3779B1)
             ^ ys.astype(np.uint32) * np.uint32(0x85EBCA77)
             ^ salt_mix)
        h ^= h >> np.uint32(15)
        h *= np.uint32(0x2C1B3C6D)
        h ^= h >> np.uint32(12)
    return h


def synth_plane(seed: int, colour: int, x0: int, y0: int, height: int, width: int,
                dynamic: int = 4096) -> np.ndarray:
    """Synthetic specimen content in global slide coordinates: a smooth ramp
    plus seeded noise, bounded by `dynamic` (top bits stay zero)."""
    xs = np.arange(x0, x0 + width, dtype=np.int64)[None, :]
    ys = np.arange(y0, y0 + height, dtype=np.int64)[:, None]
    ramp = ((xs * 13 + ys * 7 + colour * 1021) % (dynamic * 4)) // 4
    noise = _hash_noise(np.broadcast_to(xs, (height, width)),
                        np.broadcast_to(ys, (height, width)),
                        seed * 31 + colour) % np.uint32(max(1, dynamic // 16))
    return np.minimum(ramp + noise, dynamic - 1).astype(np.uint16)


def _apply_watermark(plane: np.ndarray, linear_idx: int, colour: int, dynamic: int):
    """8x8 index watermark at the tile centre (outside any overlap strip)."""
    h, w = plane.shape
    size = min(8, h, w)
    y0, x0 = (h - size) // 2, (w - size) // 2
    bits = (linear_idx >> np.arange(size * size).reshape(size, size) % 16) & 1
    plane[y0:y0 + size, x0:x0 + size] = (bits * (dynamic - 1)).astype(np.uint16)


def generate_tile(plan: ScanPlan, fov: FieldOfView) -> np.ndarray:
    """All colour planes of one field of view (deterministic for a given plan)."""
    px, py = fov.pixel_origin
    planes = np.stack([
        synth_plane(plan.seed, w, px, py, plan.tile_height, plan.tile_width, plan.dynamic)
        for w in range(plan.colours)
    ])
    for w in range(plan.colours):
        _apply_watermark(planes[w], fov.linear_index, w, plan.dynamic)
    return planes


def scan_sim(plan: ScanPlan, sink):
    """Emit (fov, planes) row-major at the plan's rate; sink failures abort."""
    interval = 1.0 / plan.rate if plan.rate > 0 else 0.0
    next_emit = time.monotonic()
    for fov in plan.fovs():  # build_fovs sorts by linear index = row-major
        if interval:
            now = time.monotonic()
            if now < next_emit:
                time.sleep(next_emit - now)
            next_emit += interval
        sink((fov, generate_tile(plan, fov)))


class ProxyQueue:
    """Bounded FIFO between scanner and writer: blocks the producer when full,
    preserves order, never drops."""

    _DONE = object()

    def __init__(self, capacity: int):
        if capacity < 1:
            raise DomainError("proxy capacity must be >= 1")
        self._q = queue.Queue()
        self._slots = threading.Semaphore(capacity)

    def put(self, item):
        self._slots.acquire()  # bounds data items; close() never blocks
        self._q.put(item)

    def close(self):
        self._q.put(self._DONE)

    def __iter__(self):
        while True:
            item = self._q.get()
            if item is self._DONE:
                return
            self._slots.release()
            yield item


@dataclass(frozen=True)
class CatalogEntry:
    slide_id: str
    path: str
    created_at: float
    status: str  # scanning | complete | failed

    def to_json_dict(self) -> dict:
        return {"slide_id": self.slide_id, "path": self.path,
                "created_at": self.created_at, "status": self.status}


class SlideCatalogFile:
    """Append-only JSON-lines slide database; the last record per id wins."""

    def __init__(self, path):
        self.path = os.fspath(path)
        self._lock = threading.Lock()

    def append(self, entry: CatalogEntry):
        line = json.dumps(entry.to_json_dict(), sort_keys=True) + "\n"
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line)
                f.flush()
                os.fsync(f.fileno())

    def entries(self) -> dict[str, CatalogEntry]:
        out: dict[str, CatalogEntry] = {}
        if not os.path.exists(self.path):
            return out
        with open(self.path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                d = json.loads(line)
                out[d["slide_id"]] = CatalogEntry(**d)
        return out

    def query(self, slide_id: str) -> CatalogEntry | None:
        return self.entries().get(slide_id)


@dataclass
class SessionStats:
    tiles_emitted: int = 0
    tiles_written: int = 0
    producer_finished_at: float = 0.0
    writer_finished_at: float = 0.0
    error: str | None = None


def plan_header(plan: ScanPlan, slide_id: str, layout: LayoutKind,
                codec_chain, chunk: ChunkShape | None = None,
                mip_levels=(1,), attributes=None) -> SlideHeader:
    tile = TileShape(plan.tile_height, plan.tile_width, plan.colours)
    if chunk is None:
        chunk = ChunkShape(tile.height, tile.width)
    return SlideHeader(
        slide_id=slide_id,
        mosaic=MosaicShape(plan.rows, plan.cols),
        tile=tile,
        pixel_pitch_nm=plan.pixel_pitch_nm,
        layout=layout,
        chunk=chunk,
        codec_chain=tuple(codec_chain),
        mip_levels=tuple(mip_levels),
        fovs=tuple(plan.fovs()),
        attributes=dict(attributes or {}),
    )


def run_session(plan: ScanPlan, out_path, proxy_capacity: int = 8,
                slide_id: str = "scan", layout: LayoutKind = LayoutKind.LINEAR,
                codec_chain=("BITSHUFFLE16", "DEFLATE"), chunk: ChunkShape | None = None,
                mip_levels=(1,), catalog: SlideCatalogFile | None = None,
                writer_delay: float = 0.0,
                fail_after: int | None = None) -> tuple[CatalogEntry, SessionStats]:
    """Run producer and writer concurrently through the proxy FIFO.

    The writer may finish after the producer (it drains the queue).
    `writer_delay` artificially slows the writer; `fail_after` aborts the
    producer after that many tiles (both for tests and benchmarks).
    """
    out_path = os.fspath(out_path)
    header = plan_header(plan, slide_id, layout, codec_chain, chunk, mip_levels)
    stats = SessionStats()
    proxy = ProxyQueue(proxy_capacity)
    entry = CatalogEntry(slide_id, out_path, time.time(), "scanning")
    if catalog is not None:
        catalog.append(entry)
    producer_error: list = []

    def produce():
        def sink(item):
            if fail_after is not None and stats.tiles_emitted >= fail_after:
                raise RuntimeError("scan aborted (fault injection)")
            proxy.put(item)
            stats.tiles_emitted += 1

        try:
            scan_sim(plan, sink)
        except Exception as exc:
            producer_error.append(exc)
        finally:
            stats.producer_finished_at = time.monotonic()
            proxy.close()

    producer = threading.Thread(target=produce, name="vslide-scanner")
    producer.start()
    writer = create_slide(out_path, header)
    status = "complete"
    try:
        for fov, planes in proxy:
            if writer_delay:
                time.sleep(writer_delay)
            writer.write_fov(fov, planes)
            stats.tiles_written += 1
        producer.join()
        if producer_error:
            raise producer_error[0]
        writer.finalize()
    except Exception as exc:
        writer.abort()
        status = "failed"
        stats.error = str(exc)
    finally:
        producer.join()
        stats.writer_finished_at = time.monotonic()
    entry = CatalogEntry(slide_id, out_path, entry.created_at, status)
    if catalog is not None:
        catalog.append(entry)
    return entry, stats


class SlideManager:
    """Spawns an isolated writer session per START_SCAN request and stays
    immediately available for the next scan while previous writers drain."""

    def __init__(self, output_dir, catalog: SlideCatalogFile, serve_catalog=None):
        self.output_dir = os.fspath(output_dir)
        self.catalog = catalog
        self.serve_catalog = serve_catalog  # remote.Catalog to register completed slides
        self._active: dict[str, threading.Thread] = {}
        self._lock = threading.Lock()
        os.makedirs(self.output_dir, exist_ok=True)

    def start_scan(self, request: dict) -> CatalogEntry:
        slide_id = request.get("slide_id")
        if not slide_id or not isinstance(slide_id, str):
            raise DomainError("slide_id is required")
        plan = ScanPlan.from_json_dict(request["plan"])
        layout = LayoutKind(request.get("layout", "LINEAR"))
        codec = chain_from_name(request.get("codec", "bitshuffle-deflate"))
        chunk = None
        if "chunk" in request:
            chunk = ChunkShape(request["chunk"]["h"], request["chunk"]["w"])
        mip_levels = tuple(request.get("mip_levels", [1]))
        # validate the header now so bad requests never register a session
        plan_header(plan, slide_id, layout, codec, chunk, mip_levels)
        path = os.path.join(self.output_dir, f"{slide_id}.vsf")
        with self._lock:
            active = self._active.get(slide_id)
            if active is not None and active.is_alive():
                raise DomainError(f"scan for slide {slide_id!r} already active")
            existing = self.catalog.query(slide_id)
            if existing is not None and existing.status != "failed":
                raise DomainError(f"slide id {slide_id!r} already in the catalog")
            entry = CatalogEntry(slide_id, path, time.time(), "scanning")
            thread = threading.Thread(
                target=self._run, name=f"vslide-session-{slide_id}",
                args=(plan, path, slide_id, layout, codec, chunk, mip_levels))
            self._active[slide_id] = thread
            thread.start()
        return entry

    def _run(self, plan, path, slide_id, layout, codec, chunk, mip_levels):
        entry, _ = run_session(plan, path, slide_id=slide_id, layout=layout,
                               codec_chain=codec, chunk=chunk, mip_levels=mip_levels,
                               catalog=self.catalog)
        if entry.status == "complete" and self.serve_catalog is not None:
            self.serve_catalog.add(slide_id, path)

    def wait_all(self, timeout: float | None = None):
        with self._lock:
            threads = list(self._active.values())
        for t in threads:
            t.join(timeout)

    def handle_start_scan(self, payload: bytes) -> bytes:
        """VSP1 handler for msg 0x10."""
        request = json.loads(payload.decode("utf-8"))
        entry = self.start_scan(request)
        return json.dumps(entry.to_json_dict(), sort_keys=True,
                          separators=(",", ":")).encode("utf-8")


def manager_serve(listen, catalog: SlideCatalogFile, output_dir):
    """Tile-dealer server that also accepts START_SCAN requests; completed
    slides become servable immediately."""
    from .remote import Catalog, protocol, serve

    serve_catalog = Catalog({sid: e.path for sid, e in catalog.entries().items()
                             if e.status == "complete"})
    manager = SlideManager(output_dir, catalog, serve_catalog)
    server = serve(listen, serve_catalog,
                   handlers={protocol.MSG_START_SCAN: manager.handle_start_scan})
    server.manager = manager  # type: ignore[attr-defined]
    return server
