"""Chunk data-transfer pipeline: bit-shuffle pre-filter + lossless compression.

The bit-transpose kernel has two interchangeable backends: a compiled
extension and a pure-numpy fallback, selected at import time.  Set
VSLIDE_PURE_PYTHON=1 to force the fallback.
"""

from __future__ import annotations

import os
import zlib

import numpy as np

from ..errors import DomainError, FormatError

from . import _bitshuffle_py

if os.environ.get("VSLIDE_PURE_PYTHON") == "1":
    _bitshuffle = _bitshuffle_py
    BACKEND = "python"
else:
    try:
        from . import _bitshuffle_cy as _bitshuffle  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - build-less checkout
        _bitshuffle = _bitshuffle_py
        BACKEND = "python"

RAW = "RAW"
DEFLATE = "DEFLATE"
BITSHUFFLE16 = "BITSHUFFLE16"

# single-byte codec ids used in the container and on the wire
CODEC_IDS = {
    0: (RAW,),
    1: (DEFLATE,),
    2: (BITSHUFFLE16, DEFLATE),
}
_STAGES_TO_ID = {stages: cid for cid, stages in CODEC_IDS.items()}

BITSHUFFLE_BLOCK = _bitshuffle_py.BLOCK


def bitshuffle16_encode(samples) -> bytes:
    """Bit-transpose 16-bit samples so equal bit planes form runs of bytes."""
    return _bitshuffle.encode(samples)


def bitshuffle16_decode(data: bytes) -> np.ndarray:
    if len(data) % 2:
        raise FormatError(f"bitshuffle stream length {len(data)} is odd")
    return np.asarray(_bitshuffle.decode(data), dtype=np.uint16)


class CodecChain:
    """Ordered encode stages; decoding applies them in reverse."""

    def __init__(self, stages):
        stages = tuple(stages)
        if not stages:
            raise DomainError("codec chain must not be empty")
        if RAW in stages and stages != (RAW,):
            raise DomainError("RAW must appear alone")
        if BITSHUFFLE16 in stages:
            if DEFLATE not in stages or stages.index(BITSHUFFLE16) > stages.index(DEFLATE):
                raise DomainError("BITSHUFFLE16 must precede DEFLATE")
        for s in stages:
            if s not in (RAW, DEFLATE, BITSHUFFLE16):
                raise DomainError(f"unknown codec stage {s!r}")
        self.stages = stages

    @classmethod
    def from_id(cls, codec_id: int) -> "CodecChain":
        if codec_id not in CODEC_IDS:
            raise FormatError(f"unknown codec id {codec_id}")
        return cls(CODEC_IDS[codec_id])

    @property
    def codec_id(self) -> int:
        if self.stages not in _STAGES_TO_ID:
            raise DomainError(f"chain {self.stages} has no registered wire id")
        return _STAGES_TO_ID[self.stages]

    def __eq__(self, other):
        return isinstance(other, CodecChain) and self.stages == other.stages

    def __repr__(self):
        return f"CodecChain({'+'.join(self.stages)})"


def chunk_encode(chain: CodecChain, raw: bytes) -> bytes:
    data = bytes(raw)
    for stage in chain.stages:
        if stage == RAW:
            pass
        elif stage == BITSHUFFLE16:
            if len(data) % 2:
                raise FormatError("bitshuffle stage requires an even byte count")
            data = bitshuffle16_encode(np.frombuffer(data, dtype="<u2"))
        elif stage == DEFLATE:
            co = zlib.compressobj(level=6, wbits=-15)  # headerless RFC 1951
            data = co.compress(data) + co.flush()
    return data


def chunk_decode(chain: CodecChain, encoded: bytes, raw_len: int) -> bytes:
    data = bytes(encoded)
    try:
        for stage in reversed(chain.stages):
            if stage == RAW:
                pass
            elif stage == DEFLATE:
                data = zlib.decompress(data, wbits=-15)
            elif stage == BITSHUFFLE16:
                data = bitshuffle16_decode(data).astype("<u2").tobytes()
    except zlib.error as exc:
        raise FormatError(f"corrupt DEFLATE stream: {exc}") from exc
    if len(data) != raw_len:
        raise FormatError(f"decoded {len(data)} bytes, expected {raw_len}")
    return data
