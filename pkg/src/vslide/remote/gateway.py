"""HTTP gateway: bridges the browser viewer to the tile dealer.

Stateless JSON/PNG endpoints, rendered server-side by the CPU compositor:

    GET /slides
    GET /slides/{id}/header
    GET /slides/{id}/render?x0&y0&x1&y1&w&h&level&gamma&status&contrast&mixer&pipeline
    GET /slides/{id}/tile/{r}/{c}/{lvl}.png

All responses carry CORS headers.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qsl, urlsplit

from .. import spatial
from ..cache import DEFAULT_TEX_BYTES, LruCache
from ..compositor import ViewportRect, params_from_query, render_viewport
from ..errors import DomainError, RemoteError, VslideError
from ..imageio import png_bytes
from ..model import fov_bounds
from . import protocol as P
from .client import RemoteSlideReader, VspClient

_RE_HEADER = re.compile(r"^/slides/([^/]+)/header$")
_RE_RENDER = re.compile(r"^/slides/([^/]+)/render$")
_RE_TILE = re.compile(r"^/slides/([^/]+)/tile/(\d+)/(\d+)/(\d+)\.png$")


class _Gateway:
    def __init__(self, dealer_address, cache_bytes: int = DEFAULT_TEX_BYTES):
        self.dealer_address = dealer_address
        self._slides: dict = {}
        self._lock = threading.Lock()
        self.cache = LruCache(cache_bytes)

    def list_slides(self) -> list[str]:
        with VspClient(self.dealer_address) as client:
            return client.list_slides()

    def slide(self, slide_id: str):
        with self._lock:
            if slide_id not in self._slides:
                reader = RemoteSlideReader(VspClient(self.dealer_address), slide_id)
                tree = spatial.build(
                    [(fov_bounds(f, reader.header.tile), f.linear_index)
                     for f in reader.header.fovs])
                self._slides[slide_id] = (reader, tree)
            return self._slides[slide_id]


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, *args):  # quiet by default
        pass

    def _send(self, status: int, content_type: str, body: bytes):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, status: int, obj):
        self._send(status, "application/json", P.canonical_json(obj))

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, OPTIONS")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        gw: _Gateway = self.server.gateway  # type: ignore[attr-defined]
        url = urlsplit(self.path)
        query = dict(parse_qsl(url.query))
        try:
            if url.path == "/slides":
                self._send_json(200, gw.list_slides())
                return
            m = _RE_HEADER.match(url.path)
            if m:
                reader, _ = gw.slide(m.group(1))
                self._send(200, "application/json",
                           P.canonical_json(reader.header.to_json_dict()))
                return
            m = _RE_RENDER.match(url.path)
            if m:
                self._render(gw, m.group(1), query)
                return
            m = _RE_TILE.match(url.path)
            if m:
                self._tile(gw, m.group(1), int(m.group(2)), int(m.group(3)),
                           int(m.group(4)))
                return
            self._send_json(404, {"code": "not_found", "message": url.path})
        except RemoteError as exc:
            status = 404 if exc.code == "not_found" else 400
            self._send_json(status, {"code": exc.code, "message": str(exc)})
        except (DomainError, KeyError, ValueError) as exc:
            self._send_json(400, {"code": "bad_request", "message": str(exc)})
        except VslideError as exc:
            self._send_json(500, {"code": "internal", "message": str(exc)})

    def _render(self, gw: _Gateway, slide_id: str, query: dict):
        reader, tree = gw.slide(slide_id)
        viewport = ViewportRect(float(query["x0"]), float(query["x1"]),
                                float(query["y0"]), float(query["y1"]))
        out_size = (int(query["w"]), int(query["h"]))
        params = params_from_query(query, reader.header.tile.colours)
        image = render_viewport(reader, tree, viewport, out_size, params, cache=gw.cache)
        self._send(200, "image/png", png_bytes(image))

    def _tile(self, gw: _Gateway, slide_id: str, r: int, c: int, level: int):
        reader, tree = gw.slide(slide_id)
        fov = reader.header.fov_at(r, c)
        if fov is None:
            self._send_json(404, {"code": "not_found", "message": f"fov ({r}, {c})"})
            return
        bounds = fov_bounds(fov, reader.header.tile)
        viewport = ViewportRect(bounds.x0, bounds.x1, bounds.y0, bounds.y1)
        lh = -(-reader.header.tile.height // level)
        lw = -(-reader.header.tile.width // level)
        params = params_from_query({"level": str(level)}, reader.header.tile.colours)
        image = render_viewport(reader, tree, viewport, (lw, lh), params, cache=gw.cache)
        self._send(200, "image/png", png_bytes(image))


class GatewayServer(ThreadingHTTPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, dealer_address, **kwargs):
        self.gateway = _Gateway(dealer_address, **kwargs)
        super().__init__(address, _Handler)


def http_gateway(dealer_address, http_address, **kwargs) -> GatewayServer:
    """Start the gateway in a background thread; returns the HTTP server."""
    server = GatewayServer(http_address, dealer_address, **kwargs)
    thread = threading.Thread(target=server.serve_forever, daemon=True,
                              name="vslide-gateway")
    thread.start()
    server._thread = thread  # type: ignore[attr-defined]
    return server
