"""The virtual-slide file (VSF): a chunked, compressed, self-describing container.

File layout, all integers little-endian:

    magic "VSF1"
    u32   header length
    header: canonical JSON (sorted keys, UTF-8), includes the fov table
    chunk data region (appended in write order)
    chunk index table: 28-byte records (u64 offset, u64 compressed_len,
                       u64 raw_len, u32 crc32 of the compressed bytes)
    footer: u64 index offset, u32 index entry count, magic "VSFE"

Index records are ordered canonically: by mip level ascending, then fov
storage ordinal, then colour plane, then chunk row-major within the plane.
A file without the footer is an unfinalized (crashed) write and is refused.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .codec import CodecChain, chunk_decode, chunk_encode
from .errors import (
    CorruptionError,
    DomainError,
    FormatError,
    UnfinalizedFileError,
    UnsupportedOperationError,
)
from .mip import mignify, mip_dims
from .model import FieldOfView, LayoutKind, SlideHeader

MAGIC = b"VSF1"
FOOTER_MAGIC = b"VSFE"
INDEX_RECORD = struct.Struct("<QQQI")
FOOTER = struct.Struct("<QI4s")

ALL = None  # colour selector: all planes


@dataclass(frozen=True)
class ChunkIndexEntry:
    offset: int
    compressed_len: int
    raw_len: int
    crc32: int


@dataclass(frozen=True)
class Hyperslab:
    """Half-open pixel region [r0, r1) x [c0, c1) of a dataset."""

    r0: int
    r1: int
    c0: int
    c1: int

    def __post_init__(self):
        if not (0 <= self.r0 < self.r1 and 0 <= self.c0 < self.c1):
            raise DomainError(f"invalid hyperslab {self}")


def header_json_bytes(header: SlideHeader) -> bytes:
    return json.dumps(header.to_json_dict(), sort_keys=True,
                      separators=(",", ":"), ensure_ascii=False).encode("utf-8")


class IndexPlan:
    """Maps (level, fov ordinal, colour, chunk position) to a flat index ordinal."""

    def __init__(self, header: SlideHeader):
        self.header = header
        n = header.packing_factor if header.layout is LayoutKind.PACKED2D else 1
        self.n = n
        nw = header.tile.colours
        self.per_plane = {lvl: (n * n if lvl == 1 else 1) for lvl in header.mip_levels}
        self.per_fov = {lvl: nw * self.per_plane[lvl] for lvl in header.mip_levels}
        self.level_start = {}
        start = 0
        for lvl in header.mip_levels:
            self.level_start[lvl] = start
            start += len(header.fovs) * self.per_fov[lvl]
        self.total = start

    def ordinal(self, level: int, fov_ordinal: int, w: int, cy: int = 0, cx: int = 0) -> int:
        n = self.n if level == 1 else 1
        return (self.level_start[level]
                + fov_ordinal * self.per_fov[level]
                + w * self.per_plane[level]
                + cy * n + cx)

    def chunk_raw_len(self, level: int) -> int:
        tile, chunk = self.header.tile, self.header.chunk
        if level == 1:
            return chunk.h * chunk.w * 2
        lh, lw = mip_dims(tile.height, tile.width, level)
        return lh * lw * 2


def _as_planes(header: SlideHeader, planes) -> np.ndarray:
    arr = np.ascontiguousarray(planes, dtype=np.uint16)
    tile = header.tile
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.shape != (tile.colours, tile.height, tile.width):
        raise DomainError(
            f"planes shape {arr.shape} does not match "
            f"({tile.colours}, {tile.height}, {tile.width})")
    return arr


class SlideWriter:
    """Streaming writer: tiles in any order, index and footer written at finalize."""

    def __init__(self, path, header: SlideHeader):
        self.path = os.fspath(path)
        self.header = header
        self.chain = CodecChain(header.codec_chain)
        self.plan = IndexPlan(header)
        self._entries: list = [None] * self.plan.total
        self._written = set()
        self._mips_written = False
        self._file = open(self.path, "wb")
        hdr = header_json_bytes(header)
        self._file.write(MAGIC)
        self._file.write(struct.pack("<I", len(hdr)))
        self._file.write(hdr)
        self._offset = 8 + len(hdr)

    def _append_chunk(self, ordinal: int, raw: bytes):
        encoded = chunk_encode(self.chain, raw)
        self._entries[ordinal] = ChunkIndexEntry(
            offset=self._offset, compressed_len=len(encoded),
            raw_len=len(raw), crc32=zlib.crc32(encoded))
        self._file.write(encoded)
        self._offset += len(encoded)

    def write_fov(self, fov, planes):
        """Store all colour planes of one field of view (level 1)."""
        if isinstance(fov, FieldOfView):
            r, c = fov.r, fov.c
        else:
            r, c = fov
        ordinal = self.header.fov_ordinal(r, c)
        if ordinal is None:
            raise DomainError(f"fov ({r}, {c}) is not declared in the header")
        if ordinal in self._written:
            raise DomainError(f"fov ({r}, {c}) already written")
        arr = _as_planes(self.header, planes)
        n = self.plan.n
        h, w = self.header.chunk.h, self.header.chunk.w
        for wi in range(self.header.tile.colours):
            plane = arr[wi]
            if self.header.layout is LayoutKind.PACKED2D:
                for cy in range(n):
                    for cx in range(n):
                        block = plane[cy * h:(cy + 1) * h, cx * w:(cx + 1) * w]
                        raw = np.ascontiguousarray(block).astype("<u2").tobytes()
                        self._append_chunk(self.plan.ordinal(1, ordinal, wi, cy, cx), raw)
            else:
                raw = plane.astype("<u2").tobytes()
                self._append_chunk(self.plan.ordinal(1, ordinal, wi), raw)
        self._written.add(ordinal)

    def _read_plane(self, fov_ordinal: int, w: int) -> np.ndarray:
        """Decode a written level-1 plane back from this (still open) file."""
        tile = self.header.tile
        plane = np.empty((tile.height, tile.width), dtype=np.uint16)
        n, ch, cw = self.plan.n, self.header.chunk.h, self.header.chunk.w
        with open(self.path, "rb") as f:
            for cy in range(n):
                for cx in range(n):
                    entry = self._entries[self.plan.ordinal(1, fov_ordinal, w, cy, cx)]
                    f.seek(entry.offset)
                    raw = chunk_decode(self.chain, f.read(entry.compressed_len), entry.raw_len)
                    block = np.frombuffer(raw, dtype="<u2").reshape(ch, cw)
                    plane[cy * ch:(cy + 1) * ch, cx * cw:(cx + 1) * cw] = block
        return plane

    def write_mip_levels(self, levels=None):
        """Generate and append mignified planes for every declared level > 1."""
        declared = [lvl for lvl in self.header.mip_levels if lvl > 1]
        if levels is not None and sorted(levels) != declared:
            raise DomainError(f"levels {levels} do not match header mip levels {declared}")
        for lvl in declared:
            if lvl & (lvl - 1):
                raise DomainError(f"mip level {lvl} is not a power of two")
        if self._mips_written or not declared:
            self._mips_written = True
            return
        self._file.flush()
        for ordinal in sorted(self._written):
            for wi in range(self.header.tile.colours):
                plane = self._read_plane(ordinal, wi)
                for lvl in declared:
                    raw = mignify(plane, lvl).astype("<u2").tobytes()
                    self._append_chunk(self.plan.ordinal(lvl, ordinal, wi), raw)
        self._mips_written = True

    def finalize(self):
        missing = set(range(len(self.header.fovs))) - self._written
        if missing:
            raise DomainError(f"{len(missing)} declared fovs were never written")
        if not self._mips_written:
            self.write_mip_levels()
        index_offset = self._offset
        for entry in self._entries:
            self._file.write(INDEX_RECORD.pack(
                entry.offset, entry.compressed_len, entry.raw_len, entry.crc32))
        self._file.write(FOOTER.pack(index_offset, len(self._entries), FOOTER_MAGIC))
        self._file.close()

    def abort(self):
        """Close without a footer, leaving a detectably unfinalized file."""
        if not self._file.closed:
            self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            if self._file.closed:
                return
            self.finalize()
        else:
            self.abort()


def create_slide(path, header: SlideHeader) -> SlideWriter:
    return SlideWriter(path, header)


class SlideReader:
    """Random-access reader over a finalized VSF file.

    Safe for independent concurrent reads (each read uses pread-style
    positioned I/O).  Tracks chunks_read / bytes_read for I/O accounting.
    """

    def __init__(self, path):
        self.path = os.fspath(path)
        self._file = open(self.path, "rb")
        head = self._file.read(8)
        if len(head) < 8 or head[:4] != MAGIC:
            raise FormatError(f"{self.path}: bad magic, not a VSF file")
        (hdr_len,) = struct.unpack("<I", head[4:8])
        hdr = self._file.read(hdr_len)
        if len(hdr) != hdr_len:
            raise FormatError(f"{self.path}: truncated header")
        try:
            self.header = SlideHeader.from_json_dict(json.loads(hdr.decode("utf-8")))
        except (ValueError, KeyError) as exc:
            raise FormatError(f"{self.path}: bad header JSON: {exc}") from exc
        self.chain = CodecChain(self.header.codec_chain)
        self.plan = IndexPlan(self.header)
        size = os.fstat(self._file.fileno()).st_size
        if size < 8 + hdr_len + FOOTER.size:
            raise UnfinalizedFileError(f"{self.path}: missing footer (unfinalized write?)")
        self._file.seek(size - FOOTER.size)
        index_offset, count, foot_magic = FOOTER.unpack(self._file.read(FOOTER.size))
        if foot_magic != FOOTER_MAGIC:
            raise UnfinalizedFileError(f"{self.path}: missing footer (unfinalized write?)")
        if count != self.plan.total:
            raise FormatError(
                f"{self.path}: index has {count} entries, header implies {self.plan.total}")
        self._file.seek(index_offset)
        blob = self._file.read(count * INDEX_RECORD.size)
        if len(blob) != count * INDEX_RECORD.size:
            raise FormatError(f"{self.path}: truncated chunk index")
        self.index = [ChunkIndexEntry(*INDEX_RECORD.unpack_from(blob, i * INDEX_RECORD.size))
                      for i in range(count)]
        self.chunks_read = 0
        self.bytes_read = 0

    def close(self):
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def reset_counters(self):
        self.chunks_read = 0
        self.bytes_read = 0

    def _read_chunk(self, ordinal: int, identity: str) -> bytes:
        entry = self.index[ordinal]
        data = os.pread(self._file.fileno(), entry.compressed_len, entry.offset)
        self.chunks_read += 1
        self.bytes_read += len(data)
        if zlib.crc32(data) != entry.crc32:
            raise CorruptionError(f"CRC mismatch in chunk {identity}", chunk=identity)
        try:
            return chunk_decode(self.chain, data, entry.raw_len)
        except FormatError as exc:
            raise CorruptionError(f"undecodable chunk {identity}: {exc}", chunk=identity) from exc

    def _check_level(self, level: int):
        if level not in self.header.mip_levels:
            raise DomainError(f"level {level} not stored (available: {self.header.mip_levels})")

    def plane_dims(self, level: int) -> tuple[int, int]:
        return mip_dims(self.header.tile.height, self.header.tile.width, level)

    def _read_plane(self, fov_ordinal: int, w: int, level: int) -> np.ndarray:
        ident = f"fov#{fov_ordinal}/w{w}/L{level}"
        if level == 1 and self.header.layout is LayoutKind.PACKED2D:
            n, ch, cw = self.plan.n, self.header.chunk.h, self.header.chunk.w
            plane = np.empty((self.header.tile.height, self.header.tile.width), np.uint16)
            for cy in range(n):
                for cx in range(n):
                    raw = self._read_chunk(self.plan.ordinal(1, fov_ordinal, w, cy, cx),
                                           f"{ident}/({cy},{cx})")
                    plane[cy * ch:(cy + 1) * ch, cx * cw:(cx + 1) * cw] = \
                        np.frombuffer(raw, dtype="<u2").reshape(ch, cw)
            return plane
        raw = self._read_chunk(self.plan.ordinal(level, fov_ordinal, w), ident)
        return np.frombuffer(raw, dtype="<u2").reshape(self.plane_dims(level)).copy()

    def read_fov(self, r: int, c: int, colour=ALL, level: int = 1):
        """Decoded plane(s) of a field of view, or None if absent from a sparse mosaic."""
        self._check_level(level)
        ordinal = self.header.fov_ordinal(r, c)
        if ordinal is None:
            return None
        if colour is ALL:
            return np.stack([self._read_plane(ordinal, w, level)
                             for w in range(self.header.tile.colours)])
        if not 0 <= colour < self.header.tile.colours:
            raise DomainError(f"colour index {colour} out of range")
        return self._read_plane(ordinal, colour, level)

    def read_slab(self, lower_index: int, upper_index: int, level: int = 1) -> np.ndarray:
        """Rows of the LINEAR dataset for fields of view [lower_index, upper_index)."""
        if self.header.layout is not LayoutKind.LINEAR:
            raise UnsupportedOperationError("read_slab requires the LINEAR layout")
        if lower_index > upper_index:
            raise DomainError("lower_index must be <= upper_index")
        self._check_level(level)
        lh, lw = self.plane_dims(level)
        nw = self.header.tile.colours
        rows = []
        for ordinal, fov in enumerate(self.header.fovs):
            if lower_index <= fov.linear_index < upper_index:
                for w in range(nw):
                    rows.append(self._read_plane(ordinal, w, level))
        if not rows:
            return np.empty((0, lw), dtype=np.uint16)
        return np.concatenate(rows, axis=0)

    def read_packed_region(self, slab: Hyperslab, level: int = 1) -> np.ndarray:
        """Pixels of a hyperslab of the packed (R*Nw*H, C*W) dataset.

        Reads only the chunks overlapping the request; pixels of absent
        sparse fovs come back as zeros.
        """
        if self.header.layout is not LayoutKind.PACKED2D or level != 1:
            raise UnsupportedOperationError("read_packed_region requires PACKED2D level 1")
        tile, mosaic = self.header.tile, self.header.mosaic
        ds_h = mosaic.rows * tile.colours * tile.height
        ds_w = mosaic.cols * tile.width
        if slab.r1 > ds_h or slab.c1 > ds_w:
            raise DomainError(f"hyperslab {slab} outside dataset ({ds_h}, {ds_w})")
        ch, cw, n = self.header.chunk.h, self.header.chunk.w, self.plan.n
        out = np.zeros((slab.r1 - slab.r0, slab.c1 - slab.c0), dtype=np.uint16)
        for gy in range(slab.r0 // ch, -(-slab.r1 // ch)):
            fov_r, rest = divmod(gy, tile.colours * n)
            w, cy = divmod(rest, n)
            for gx in range(slab.c0 // cw, -(-slab.c1 // cw)):
                fov_c, cx = divmod(gx, n)
                ordinal = self.header.fov_ordinal(fov_r, fov_c)
                if ordinal is None:
                    continue
                raw = self._read_chunk(self.plan.ordinal(1, ordinal, w, cy, cx),
                                       f"grid({gy},{gx})")
                block = np.frombuffer(raw, dtype="<u2").reshape(ch, cw)
                y0, x0 = gy * ch, gx * cw
                sy0, sy1 = max(slab.r0, y0), min(slab.r1, y0 + ch)
                sx0, sx1 = max(slab.c0, x0), min(slab.c1, x0 + cw)
                out[sy0 - slab.r0:sy1 - slab.r0, sx0 - slab.c0:sx1 - slab.c0] = \
                    block[sy0 - y0:sy1 - y0, sx0 - x0:sx1 - x0]
        return out


def open_slide(path) -> SlideReader:
    return SlideReader(path)


def read_header(reader: SlideReader) -> SlideHeader:
    return reader.header


def rewrite_with_mip_levels(path, levels) -> SlideHeader:
    """Rebuild a finalized slide with the given mip levels (idempotent, atomic)."""
    for lvl in levels:
        if lvl < 2 or lvl & (lvl - 1):
            raise DomainError(f"mip level {lvl} must be a power of two > 1")
    with open_slide(path) as reader:
        old = reader.header
        new_header = old.with_mip_levels(levels)
        if new_header.mip_levels == old.mip_levels:
            return old
        tmp = f"{path}.tmp"
        with create_slide(tmp, new_header) as writer:
            for fov in old.fovs:
                writer.write_fov(fov, reader.read_fov(fov.r, fov.c))
    os.replace(tmp, path)
    return new_header
