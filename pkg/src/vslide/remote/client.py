"""VSP1 client and the remote slide reader (same read surface as SlideReader)."""

from __future__ import annotations

import json
import socket
import struct
import threading

import numpy as np

from ..errors import ProtocolError, RemoteError
from ..mip import mip_dims
from ..model import SlideHeader
from . import protocol as P


class VspClient:
    """One connection, strict request -> reply alternation (thread-safe)."""

    def __init__(self, address, max_frame: int = P.DEFAULT_MAX_FRAME, timeout: float = 30.0):
        self._sock = socket.create_connection(address, timeout=timeout)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._max_frame = max_frame
        self._lock = threading.Lock()

    def close(self):
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def request(self, msg_type: int, payload: bytes = b"") -> bytes:
        with self._lock:
            P.send_frame(self._sock, msg_type, payload)
            reply_type, reply = P.recv_frame(self._sock, self._max_frame)
        if reply_type == P.MSG_ERROR:
            err = json.loads(reply.decode("utf-8"))
            raise RemoteError(err.get("code", "unknown"), err.get("message", ""))
        if reply_type != (msg_type | P.REPLY_BIT):
            raise ProtocolError(f"reply type {reply_type:#x} for request {msg_type:#x}")
        return reply

    # -- typed requests --

    def list_slides(self) -> list[str]:
        return json.loads(self.request(P.MSG_LIST).decode("utf-8"))

    def get_header(self, slide_id: str) -> SlideHeader:
        reply = self.request(P.MSG_GET_HEADER, P.canonical_json({"slide": slide_id}))
        return SlideHeader.from_json_dict(json.loads(reply.decode("utf-8")))

    def get_tile_payload(self, slide_id: str, r: int, c: int, w=None, level: int = 1,
                         pipeline: str = "raw", codec: int | None = None) -> P.TilePayload:
        req = {"slide": slide_id, "r": r, "c": c, "level": level, "pipeline": pipeline}
        if w is not None:
            req["w"] = w
        if codec is not None:
            req["codec"] = codec
        reply = self.request(P.MSG_GET_TILE, P.canonical_json(req))
        tile, consumed = P.TilePayload.unpack_from(reply)
        if consumed != len(reply):
            raise ProtocolError("trailing bytes after tile reply")
        return tile

    def get_tile(self, slide_id: str, r: int, c: int, w=None, level: int = 1,
                 pipeline: str = "raw", codec: int | None = None) -> np.ndarray:
        tile = self.get_tile_payload(slide_id, r, c, w, level, pipeline, codec)
        raw = tile.decode()
        arr = np.frombuffer(raw, dtype="<u2")
        planes = arr.size // (tile.height * tile.width)
        arr = arr.reshape(planes, tile.height, tile.width).copy()
        return arr[0] if tile.w != P.ALL_PLANES else arr

    def get_slab_tiles(self, slide_id: str, lower: int, upper: int, level: int = 1,
                       codec: int | None = None) -> list[P.TilePayload]:
        req = {"slide": slide_id, "lower": lower, "upper": upper, "level": level}
        if codec is not None:
            req["codec"] = codec
        reply = self.request(P.MSG_GET_SLAB, P.canonical_json(req))
        if len(reply) < 4:
            raise ProtocolError("truncated slab reply")
        (count,) = struct.unpack_from("<I", reply)
        tiles, offset = [], 4
        for _ in range(count):
            tile, consumed = P.TilePayload.unpack_from(reply, offset)
            tiles.append(tile)
            offset += consumed
        if offset != len(reply):
            raise ProtocolError("trailing bytes after slab reply")
        return tiles

    def start_scan(self, plan_json: dict) -> dict:
        reply = self.request(P.MSG_START_SCAN, P.canonical_json(plan_json))
        return json.loads(reply.decode("utf-8"))


class RemoteSlideReader:
    """Reader over the wire; mirrors the local SlideReader read surface so the
    compositor and caches work against either."""

    def __init__(self, client: VspClient, slide_id: str):
        self._client = client
        self.slide_id = slide_id
        self.header = client.get_header(slide_id)

    def plane_dims(self, level: int) -> tuple[int, int]:
        return mip_dims(self.header.tile.height, self.header.tile.width, level)

    def read_fov(self, r: int, c: int, colour=None, level: int = 1):
        try:
            return self._client.get_tile(self.slide_id, r, c, colour, level)
        except RemoteError as exc:
            if exc.code == "not_found":
                return None
            raise

    def read_slab(self, lower_index: int, upper_index: int, level: int = 1) -> np.ndarray:
        tiles = self._client.get_slab_tiles(self.slide_id, lower_index, upper_index, level)
        lh, lw = self.plane_dims(level)
        nw = self.header.tile.colours
        rows = [np.frombuffer(t.decode(), dtype="<u2").reshape(nw * lh, lw) for t in tiles]
        if not rows:
            return np.empty((0, lw), dtype=np.uint16)
        return np.concatenate(rows, axis=0)

    def close(self):
        self._client.close()
