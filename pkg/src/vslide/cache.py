"""RAM cache tier: byte-budgeted LRU with in-flight request coalescing, a
read-ahead prefetcher, and an optional local-directory (SSD-style) slide cache.
"""

from __future__ import annotations

import os
import shutil
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import Rect

DEFAULT_TILE_BYTES = 512 * 1024 * 1024
DEFAULT_TEX_BYTES = 256 * 1024 * 1024


@dataclass(frozen=True)
class TileKey:
    slide_id: str
    r: int
    c: int
    colour: int | None  # None = all planes
    level: int
    pipeline: str


def payload_size(payload) -> int:
    if payload is None:
        return 64  # negative-result marker
    if isinstance(payload, np.ndarray):
        return payload.nbytes
    if isinstance(payload, (bytes, bytearray, memoryview)):
        return len(payload)
    return 64


class _Latch:
    __slots__ = ("event", "payload", "error")

    def __init__(self):
        self.event = threading.Event()
        self.payload = None
        self.error = None


class LruCache:
    """Byte-budgeted LRU map.  A single entry larger than the whole budget is
    returned to the caller but never admitted.  Concurrent get_or_load calls
    for the same key run the loader exactly once."""

    def __init__(self, capacity_bytes: int):
        self.capacity = capacity_bytes
        self._entries: OrderedDict = OrderedDict()  # key -> (payload, size)
        self._size = 0
        self._lock = threading.Lock()
        self._inflight: dict = {}
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._entries)

    @property
    def size_bytes(self) -> int:
        return self._size

    def get(self, key):
        with self._lock:
            if key in self._entries:
                self._entries.move_to_end(key)
                self.hits += 1
                return self._entries[key][0]
            self.misses += 1
            return None

    def put(self, key, payload):
        size = payload_size(payload)
        if size > self.capacity:
            return  # never evict working entries for an inadmissible payload
        with self._lock:
            self._evict_for(key, size)
            self._entries[key] = (payload, size)
            self._size += size

    def _evict_for(self, key, size):
        if key in self._entries:
            self._size -= self._entries.pop(key)[1]
        while self._entries and self._size + size > self.capacity:
            _, (_, old_size) = self._entries.popitem(last=False)
            self._size -= old_size

    def get_or_load(self, key, loader):
        """Cached payload for key; on a miss run loader once, even under
        concurrent requests.  Loader errors propagate and cache nothing."""
        while True:
            with self._lock:
                if key in self._entries:
                    self._entries.move_to_end(key)
                    self.hits += 1
                    return self._entries[key][0]
                latch = self._inflight.get(key)
                if latch is None:
                    latch = _Latch()
                    self._inflight[key] = latch
                    owner = True
                else:
                    owner = False
            if not owner:
                latch.event.wait()
                if latch.error is None:
                    return latch.payload
                continue  # owner failed; retry with our own load
            self.misses += 1
            try:
                payload = loader()
            except BaseException as exc:
                latch.error = exc
                with self._lock:
                    self._inflight.pop(key, None)
                latch.event.set()
                raise
            latch.payload = payload
            size = payload_size(payload)
            with self._lock:
                if size <= self.capacity:
                    self._evict_for(key, size)
                    self._entries[key] = (payload, size)
                    self._size += size
                self._inflight.pop(key, None)
            latch.event.set()
            return payload

    def clear(self):
        with self._lock:
            self._entries.clear()
            self._size = 0


class Prefetcher:
    """Best-effort read-ahead: warms the tile cache with tiles around a
    viewport without ever blocking the render path."""

    def __init__(self, cache: LruCache, workers: int = 4):
        self.cache = cache
        self._pool = ThreadPoolExecutor(max_workers=workers,
                                        thread_name_prefix="vslide-prefetch")
        self._pending: set = set()
        self._lock = threading.Lock()

    def prefetch_keys(self, keys, loader_for):
        futures = []
        for key in keys:
            with self._lock:
                if key in self._pending:
                    continue
                self._pending.add(key)
            futures.append(self._pool.submit(self._load_one, key, loader_for))
        return futures

    def _load_one(self, key, loader_for):
        try:
            self.cache.get_or_load(key, loader_for(key))
        except Exception:
            pass  # prefetch is best-effort
        finally:
            with self._lock:
                self._pending.discard(key)

    def shutdown(self):
        self._pool.shutdown(wait=True)


def prefetch_viewport(prefetcher: Prefetcher, reader, tree, viewport: Rect,
                      margin: float, level: int = 1, pipeline: str = "raw"):
    """Warm the cache with tiles intersecting the viewport inflated by
    `margin` tile-widths/heights.  Returns the futures (tests may wait)."""
    header = reader.header
    dx = margin * header.tile.width
    dy = margin * header.tile.height
    inflated = Rect(viewport.x0 - dx, viewport.y0 - dy,
                    viewport.x1 + dx, viewport.y1 + dy)
    keys = []
    for li in sorted(tree.query_intersect(inflated)):
        r, c = divmod(li, header.mosaic.cols)
        if header.fov_ordinal(r, c) is None:
            continue  # absent sparse tile: no-op
        keys.append(TileKey(slide_id=header.slide_id, r=r, c=c,
                            colour=None, level=level, pipeline=pipeline))

    def loader_for(key):
        from .compositor import _load_tile_planes

        fov = header.fov_at(key.r, key.c)
        return lambda: _load_tile_planes(reader, fov, key.level, key.pipeline)

    return prefetcher.prefetch_keys(keys, loader_for)


def cache_slide_locally(path, local_dir) -> str:
    """Copy-through slide-level cache (the SSD tier): copy the container file
    into local_dir on first use and return the local path."""
    os.makedirs(local_dir, exist_ok=True)
    dest = os.path.join(local_dir, os.path.basename(os.fspath(path)))
    src_stat = os.stat(path)
    if not (os.path.exists(dest) and os.path.getsize(dest) == src_stat.st_size):
        tmp = dest + ".partial"
        shutil.copyfile(path, tmp)
        os.replace(tmp, dest)
    return dest
