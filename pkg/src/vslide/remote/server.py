"""The tile dealer: serves slide headers, tiles and slabs over VSP1 frames.

Each connection is handled by its own thread and processes frames in strict
request -> reply order.  Slide readers are shared and opened once per slide.
"""

from __future__ import annotations

import json
import socketserver
import threading

import numpy as np

from ..codec import CodecChain, chunk_encode
from ..compositor import _load_tile_planes
from ..container import SlideReader, open_slide
from ..errors import DomainError, ProtocolError, UnsupportedOperationError, VslideError
from ..model import LayoutKind
from . import protocol as P


class Catalog:
    """slide_id -> container path mapping with lazily opened shared readers."""

    def __init__(self, paths: dict[str, str] | None = None):
        self._paths = dict(paths or {})
        self._readers: dict[str, SlideReader] = {}
        self._lock = threading.Lock()

    def add(self, slide_id: str, path):
        with self._lock:
            self._paths[slide_id] = str(path)
            self._readers.pop(slide_id, None)

    def list_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._paths)

    def reader(self, slide_id: str) -> SlideReader:
        with self._lock:
            if slide_id not in self._paths:
                raise KeyError(slide_id)
            if slide_id not in self._readers:
                self._readers[slide_id] = open_slide(self._paths[slide_id])
            return self._readers[slide_id]

    def close(self):
        with self._lock:
            for r in self._readers.values():
                r.close()
            self._readers.clear()


def _error_payload(code: str, message: str = "") -> bytes:
    return P.canonical_json({"code": code, "message": message})


def _field(req: dict, name: str):
    if name not in req:
        raise ProtocolError(f"missing request field {name!r}")
    return req[name]


def _encode_planes(planes: np.ndarray, codec_id: int) -> tuple[bytes, int]:
    raw = np.ascontiguousarray(planes).astype("<u2").tobytes()
    return chunk_encode(CodecChain.from_id(codec_id), raw), len(raw)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        server: TileDealer = self.server  # type: ignore[assignment]
        sock = self.request
        while True:
            try:
                msg_type, payload = P.recv_frame(sock, server.max_frame)
            except ConnectionError:
                return
            except ProtocolError as exc:
                try:
                    P.send_frame(sock, P.MSG_ERROR, _error_payload("bad_request", str(exc)))
                except OSError:
                    pass
                return
            try:
                reply_type, reply = self.dispatch(server, msg_type, payload)
            except KeyError as exc:
                reply_type, reply = P.MSG_ERROR, _error_payload("not_found", str(exc))
            except UnsupportedOperationError as exc:
                reply_type, reply = P.MSG_ERROR, _error_payload("unsupported", str(exc))
            except (DomainError, ProtocolError, json.JSONDecodeError, ValueError) as exc:
                reply_type, reply = P.MSG_ERROR, _error_payload("bad_request", str(exc))
            except VslideError as exc:
                reply_type, reply = P.MSG_ERROR, _error_payload("internal", str(exc))
            try:
                P.send_frame(sock, reply_type, reply)
            except OSError:
                return

    def dispatch(self, server: "TileDealer", msg_type: int, payload: bytes):
        if msg_type == P.MSG_LIST:
            return P.MSG_LIST | P.REPLY_BIT, P.canonical_json(server.catalog.list_ids())
        if msg_type == P.MSG_GET_HEADER:
            req = json.loads(payload.decode("utf-8"))
            reader = server.catalog.reader(_field(req, "slide"))
            return (P.MSG_GET_HEADER | P.REPLY_BIT,
                    P.canonical_json(reader.header.to_json_dict()))
        if msg_type == P.MSG_GET_TILE:
            return P.MSG_GET_TILE | P.REPLY_BIT, self._get_tile(server, payload)
        if msg_type == P.MSG_GET_SLAB:
            return P.MSG_GET_SLAB | P.REPLY_BIT, self._get_slab(server, payload)
        extra = server.handlers.get(msg_type)
        if extra is not None:
            return msg_type | P.REPLY_BIT, extra(payload)
        return P.MSG_ERROR, _error_payload("bad_request", f"unknown msg_type {msg_type:#x}")

    def _get_tile(self, server: "TileDealer", payload: bytes) -> bytes:
        req = json.loads(payload.decode("utf-8"))
        reader = server.catalog.reader(_field(req, "slide"))
        r, c = int(_field(req, "r")), int(_field(req, "c"))
        w = req.get("w")
        level = int(req.get("level", 1))
        pipeline = req.get("pipeline", "raw")
        codec_id = int(req.get("codec", reader.chain.codec_id))
        fov = reader.header.fov_at(r, c)
        if fov is None:
            raise KeyError(f"fov ({r}, {c}) absent")
        planes = _load_tile_planes(reader, fov, level, pipeline, cache=server.cache)
        if w is not None and w != P.ALL_PLANES:
            planes = planes[int(w)][None, :, :]
        data, raw_len = _encode_planes(planes, codec_id)
        h, width = planes.shape[1:]
        return P.TilePayload(
            r=r, c=c, w=P.ALL_PLANES if w in (None, P.ALL_PLANES) else int(w),
            level=level, height=h, width=width,
            codec_id=codec_id, raw_len=raw_len, data=data).pack()

    def _get_slab(self, server: "TileDealer", payload: bytes) -> bytes:
        req = json.loads(payload.decode("utf-8"))
        reader = server.catalog.reader(_field(req, "slide"))
        if reader.header.layout is not LayoutKind.LINEAR:
            raise UnsupportedOperationError("slab requests require the LINEAR layout")
        lower, upper = int(_field(req, "lower")), int(_field(req, "upper"))
        level = int(req.get("level", 1))
        codec_id = int(req.get("codec", reader.chain.codec_id))
        parts = []
        count = 0
        import struct

        for fov in reader.header.fovs:
            if lower <= fov.linear_index < upper:
                planes = reader.read_fov(fov.r, fov.c, None, level)
                data, raw_len = _encode_planes(planes, codec_id)
                h, width = planes.shape[1:]
                parts.append(P.TilePayload(
                    r=fov.r, c=fov.c, w=P.ALL_PLANES, level=level,
                    height=h, width=width, codec_id=codec_id,
                    raw_len=raw_len, data=data).pack())
                count += 1
        return struct.pack("<I", count) + b"".join(parts)


class TileDealer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, catalog: Catalog, max_frame: int = P.DEFAULT_MAX_FRAME,
                 cache=None, handlers=None):
        self.catalog = catalog
        self.max_frame = max_frame
        self.cache = cache
        self.handlers = dict(handlers or {})  # msg_type -> fn(payload) -> reply bytes
        super().__init__(address, _Handler)


def serve(address, catalog: Catalog, **kwargs) -> TileDealer:
    """Start a tile dealer in a background thread; returns the server."""
    server = TileDealer(address, catalog, **kwargs)
    thread = threading.Thread(target=server.serve_forever, daemon=True,
                              name="vslide-tile-dealer")
    thread.start()
    server._thread = thread  # type: ignore[attr-defined]
    return server
