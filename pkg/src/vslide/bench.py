"""I/O layout benchmarking: write the same mosaic in each layout and measure
sequential-slab and random-tile read throughput."""

from __future__ import annotations

import random
import time
from dataclasses import asdict, dataclass

import numpy as np

from .container import create_slide, open_slide
from .ingest import ScanPlan, generate_tile, plan_header
from .model import ChunkShape, LayoutKind


@dataclass(frozen=True)
class BenchRow:
    layout: str
    pattern: str  # sequential | random
    tiles: int
    bytes_read: int
    chunks_read: int
    seconds: float
    mb_per_s: float
    mean_tile_ms: float


def _write_layout(plan: ScanPlan, path, layout: LayoutKind, codec_chain,
                  packed_chunk_div: int = 2) -> None:
    chunk = None
    if layout is LayoutKind.PACKED2D:
        n = packed_chunk_div
        if plan.tile_height % n or plan.tile_width % n:
            n = 1
        chunk = ChunkShape(plan.tile_height // n, plan.tile_width // n)
    header = plan_header(plan, f"bench-{layout.value.lower()}", layout, codec_chain, chunk)
    with create_slide(path, header) as writer:
        for fov in header.fovs:
            writer.write_fov(fov, generate_tile(plan, fov))


def bench_layouts(path_prefix, plan: ScanPlan, codec_chain=("BITSHUFFLE16", "DEFLATE"),
                  random_reads: int = 32, seed: int = 0) -> dict:
    """Machine-readable throughput report, one row per (layout, pattern).

    Also cross-checks that every layout decodes to identical bytes.
    """
    rows: list[BenchRow] = []
    digests: dict[str, int] = {}
    rng = random.Random(seed)
    n_tiles = plan.rows * plan.cols
    for layout in LayoutKind:
        path = f"{path_prefix}.{layout.value.lower()}.vsf"
        _write_layout(plan, path, layout, codec_chain)
        with open_slide(path) as reader:
            fovs = reader.header.fovs

            # sequential: consecutive tiles in linear order
            reader.reset_counters()
            t0 = time.perf_counter()
            checksum = 0
            if layout is LayoutKind.LINEAR:
                slab = reader.read_slab(0, n_tiles)
                checksum = int(slab.astype(np.uint64).sum())
            else:
                for fov in fovs:
                    planes = reader.read_fov(fov.r, fov.c)
                    checksum += int(planes.astype(np.uint64).sum())
            dt = time.perf_counter() - t0
            digests[layout.value] = checksum
            rows.append(BenchRow(layout.value, "sequential", n_tiles,
                                 reader.bytes_read, reader.chunks_read, dt,
                                 reader.bytes_read / dt / 1e6 if dt else 0.0,
                                 dt / n_tiles * 1e3))

            # random single-tile reads
            picks = [rng.choice(fovs) for _ in range(random_reads)]
            reader.reset_counters()
            t0 = time.perf_counter()
            for fov in picks:
                reader.read_fov(fov.r, fov.c)
            dt = time.perf_counter() - t0
            rows.append(BenchRow(layout.value, "random", random_reads,
                                 reader.bytes_read, reader.chunks_read, dt,
                                 reader.bytes_read / dt / 1e6 if dt else 0.0,
                                 dt / max(1, random_reads) * 1e3))
    return {
        "plan": plan.to_json_dict(),
        "codec_chain": list(codec_chain),
        "identical_across_layouts": len(set(digests.values())) == 1,
        "rows": [asdict(r) for r in rows],
    }
