"""VSP1 wire protocol: length-framed request-reply over a stream socket.

Frame:  magic "VSP1" | u8 msg_type | u32 LE payload_len | payload.
A reply's msg_type is the request's msg_type | 0x80; 0xFF is an error reply
whose payload is canonical JSON {"code": ..., "message": ...}.

Tile payload (binary, little-endian):
    u32 r, c, w (0xFFFFFFFF = all planes), level, height, width
    u8  codec id, 3 reserved bytes
    u64 raw_len (decoded byte count)
    compressed bytes
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

from ..errors import ProtocolError

MAGIC = b"VSP1"
HEADER = struct.Struct("<4sBI")
DEFAULT_MAX_FRAME = 256 * 1024 * 1024

MSG_LIST = 0x01
MSG_GET_HEADER = 0x02
MSG_GET_TILE = 0x03
MSG_GET_SLAB = 0x04
MSG_START_SCAN = 0x10
REPLY_BIT = 0x80
MSG_ERROR = 0xFF

ALL_PLANES = 0xFFFFFFFF

TILE_HEADER = struct.Struct("<IIIIIIB3xQ")


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False).encode("utf-8")


def pack_frame(msg_type: int, payload: bytes) -> bytes:
    return HEADER.pack(MAGIC, msg_type, len(payload)) + payload


def send_frame(sock, msg_type: int, payload: bytes):
    sock.sendall(pack_frame(msg_type, payload))


def recv_exact(sock, n: int) -> bytes:
    parts = []
    got = 0
    while got < n:
        chunk = sock.recv(min(n - got, 1 << 20))
        if not chunk:
            raise ConnectionError("peer closed the connection")
        parts.append(chunk)
        got += len(chunk)
    return b"".join(parts)


def recv_frame(sock, max_frame: int = DEFAULT_MAX_FRAME) -> tuple[int, bytes]:
    """Read one frame; the length is validated before any payload allocation."""
    magic, msg_type, length = HEADER.unpack(recv_exact(sock, HEADER.size))
    if magic != MAGIC:
        raise ProtocolError(f"bad frame magic {magic!r}")
    if length > max_frame:
        raise ProtocolError(f"frame payload {length} exceeds limit {max_frame}")
    return msg_type, recv_exact(sock, length) if length else b""


def _consume_tile_data(codec_id: int, buf: bytes, offset: int, raw_len: int) -> tuple[bytes, int]:
    """Decode one tile's data starting at offset; returns (raw bytes, consumed).

    Codec 0 (RAW) consumes exactly raw_len bytes; codecs whose outermost
    stage is DEFLATE are self-delimiting raw RFC 1951 streams.
    """
    import zlib

    import numpy as np

    from ..codec import bitshuffle16_decode

    if codec_id == 0:
        end = offset + raw_len
        if end > len(buf):
            raise ProtocolError("truncated RAW tile data")
        return buf[offset:end], raw_len
    if codec_id in (1, 2):
        dec = zlib.decompressobj(wbits=-15)
        try:
            raw = dec.decompress(buf[offset:])
            raw += dec.flush()
        except zlib.error as exc:
            raise ProtocolError(f"corrupt tile stream: {exc}") from exc
        if not dec.eof:
            raise ProtocolError("truncated DEFLATE tile stream")
        consumed = len(buf) - offset - len(dec.unused_data)
        if codec_id == 2:
            raw = np.asarray(bitshuffle16_decode(raw), dtype="<u2").tobytes()
        if len(raw) != raw_len:
            raise ProtocolError(f"tile decoded to {len(raw)} bytes, expected {raw_len}")
        return raw, consumed
    raise ProtocolError(f"unknown codec id {codec_id}")


@dataclass(frozen=True)
class TilePayload:
    r: int
    c: int
    w: int  # ALL_PLANES for all
    level: int
    height: int
    width: int
    codec_id: int
    raw_len: int
    data: bytes  # encoded bytes

    def pack(self) -> bytes:
        return TILE_HEADER.pack(self.r, self.c, self.w, self.level, self.height,
                                self.width, self.codec_id, self.raw_len) + self.data

    def decode(self) -> bytes:
        raw, consumed = _consume_tile_data(self.codec_id, self.data, 0, self.raw_len)
        if consumed != len(self.data):
            raise ProtocolError("trailing bytes after tile data")
        return raw

    @classmethod
    def unpack_from(cls, buf: bytes, offset: int = 0) -> tuple["TilePayload", int]:
        if len(buf) - offset < TILE_HEADER.size:
            raise ProtocolError("truncated tile payload header")
        r, c, w, level, height, width, codec_id, raw_len = \
            TILE_HEADER.unpack_from(buf, offset)
        start = offset + TILE_HEADER.size
        _, consumed = _consume_tile_data(codec_id, buf, start, raw_len)
        end = start + consumed
        return cls(r, c, w, level, height, width, codec_id, raw_len,
                   buf[start:end]), end - offset
