import http.client
import json
import socket
import struct
import threading

import numpy as np
import pytest

from vslide.compositor import (
    ViewportRect,
    default_params,
    params_to_query,
    render_viewport,
)
from vslide.container import open_slide
from vslide.errors import ProtocolError, RemoteError
from vslide.imageio import png_bytes
from vslide.model import LayoutKind, fov_bounds
from vslide.remote import (
    Catalog,
    RemoteSlideReader,
    VspClient,
    http_gateway,
    serve,
)
from vslide.remote import protocol as P
from vslide.spatial import build as build_tree

from conftest import make_header, random_planes, write_slide


@pytest.fixture(scope="module")
def dealer(tmp_path_factory):
    root = tmp_path_factory.mktemp("slides")
    slides = {}
    specs = {
        "packed": dict(layout=LayoutKind.PACKED2D, chunk_div=2, mip_levels=(1, 2)),
        "linear": dict(layout=LayoutKind.LINEAR),
        "pertile": dict(layout=LayoutKind.PER_TILE,
                        codec=("BITSHUFFLE16", "DEFLATE")),
        "sparse": dict(layout=LayoutKind.PER_TILE, present={(0, 0), (2, 3)}),
    }
    catalog = Catalog()
    for sid, kw in specs.items():
        header = make_header(slide_id=sid, **kw)
        data = random_planes(header, seed=hash(sid) % 1000)
        path = write_slide(root / f"{sid}.vsf", header, data)
        catalog.add(sid, path)
        slides[sid] = (header, data, path)
    server = serve(("127.0.0.1", 0), catalog)
    yield server.server_address, slides
    server.shutdown()
    catalog.close()


def test_list_slides(dealer):
    address, slides = dealer
    with VspClient(address) as client:
        assert sorted(client.list_slides()) == sorted(slides)


def test_header_roundtrip(dealer):
    address, slides = dealer
    with VspClient(address) as client:
        for sid, (header, _, _) in slides.items():
            got = client.get_header(sid)
            assert got.to_json_dict() == header.to_json_dict()


def test_remote_reads_equal_local(dealer):
    # the remote reader is a drop-in for the local one: every fov, every
    # stored level, single plane and all-planes requests
    address, slides = dealer
    for sid, (header, data, path) in slides.items():
        with open_slide(path) as local, VspClient(address) as client:
            remote = RemoteSlideReader(client, sid)
            assert remote.header.to_json_dict() == header.to_json_dict()
            for fov in header.fovs:
                for level in header.mip_levels:
                    a = local.read_fov(fov.r, fov.c, level=level)
                    b = remote.read_fov(fov.r, fov.c, level=level)
                    assert np.array_equal(a, b)
                one = remote.read_fov(fov.r, fov.c, colour=1)
                assert np.array_equal(one, data[fov.linear_index][1])


def test_remote_slab_equals_local(dealer):
    address, slides = dealer
    header, data, path = slides["linear"]
    with open_slide(path) as local, VspClient(address) as client:
        remote = RemoteSlideReader(client, "linear")
        for lo, hi in [(0, 3), (5, 6), (0, 12), (7, 7)]:
            assert np.array_equal(local.read_slab(lo, hi), remote.read_slab(lo, hi))


def test_absent_sparse_fov_is_none_remotely(dealer):
    address, _ = dealer
    with VspClient(address) as client:
        remote = RemoteSlideReader(client, "sparse")
        assert remote.read_fov(0, 0) is not None
        assert remote.read_fov(1, 1) is None


def test_requested_wire_codec_honoured(dealer):
    address, slides = dealer
    header, data, _ = slides["pertile"]
    with VspClient(address) as client:
        for codec in (0, 1, 2):  # raw, deflate, bitshuffle+deflate
            tile = client.get_tile_payload("pertile", 0, 0, w=0, codec=codec)
            assert tile.codec_id == codec
            got = np.frombuffer(tile.decode(), "<u2").reshape(64, 48)
            assert np.array_equal(got, data[0][0])


def test_pipelined_sequential_requests_stay_ordered(dealer):
    address, slides = dealer
    header, data, _ = slides["pertile"]
    with VspClient(address) as client:
        for _ in range(3):
            for fov in header.fovs[:6]:
                got = client.get_tile("pertile", fov.r, fov.c, w=0)
                assert np.array_equal(got, data[fov.linear_index][0])


class TestErrors:
    def test_unknown_slide(self, dealer):
        address, _ = dealer
        with VspClient(address) as client:
            with pytest.raises(RemoteError) as err:
                client.get_header("no-such-slide")
            assert err.value.code == "not_found"

    def test_absent_tile_not_found(self, dealer):
        address, _ = dealer
        with VspClient(address) as client:
            with pytest.raises(RemoteError) as err:
                client.get_tile_payload("sparse", 1, 1)
            assert err.value.code == "not_found"

    def test_slab_on_wrong_layout_unsupported(self, dealer):
        address, _ = dealer
        with VspClient(address) as client:
            with pytest.raises(RemoteError) as err:
                client.get_slab_tiles("pertile", 0, 2)
            assert err.value.code == "unsupported"

    def test_malformed_request_bad_request(self, dealer):
        address, _ = dealer
        with VspClient(address) as client:
            with pytest.raises(RemoteError) as err:
                client.request(P.MSG_GET_TILE, b'{"slide": "packed"}')
            assert err.value.code == "bad_request"

    def test_unknown_message_type(self, dealer):
        address, _ = dealer
        with VspClient(address) as client:
            with pytest.raises(RemoteError):
                client.request(0x42, b"")

    def test_connection_survives_errors(self, dealer):
        address, slides = dealer
        header, data, _ = slides["packed"]
        with VspClient(address) as client:
            with pytest.raises(RemoteError):
                client.get_header("nope")
            got = client.get_tile("packed", 0, 0, w=0)
            assert np.array_equal(got, data[0][0])


class TestWireFormat:
    def test_frame_layout(self, dealer):
        address, _ = dealer
        with socket.create_connection(address, timeout=10) as sock:
            sock.sendall(b"VSP1" + bytes([P.MSG_LIST]) + struct.pack("<I", 0))
            head = b""
            while len(head) < 9:
                head += sock.recv(9 - len(head))
            assert head[:4] == b"VSP1"
            assert head[4] == P.MSG_LIST | P.REPLY_BIT
            (length,) = struct.unpack_from("<I", head, 5)
            body = b""
            while len(body) < length:
                body += sock.recv(length - len(body))
            assert isinstance(json.loads(body.decode("utf-8")), list)

    @staticmethod
    def _read_error_then_close(sock):
        head = b""
        while len(head) < 9:
            part = sock.recv(9 - len(head))
            if not part:
                return None
            head += part
        assert head[:4] == b"VSP1" and head[4] == P.MSG_ERROR
        (length,) = struct.unpack_from("<I", head, 5)
        body = b""
        while len(body) < length:
            body += sock.recv(length - len(body))
        assert sock.recv(1) == b""  # connection closed afterwards
        return json.loads(body.decode("utf-8"))

    def test_bad_magic_ends_the_connection(self, dealer):
        address, _ = dealer
        with socket.create_connection(address, timeout=10) as sock:
            sock.sendall(b"XXXX" + bytes([P.MSG_LIST]) + struct.pack("<I", 0))
            err = self._read_error_then_close(sock)
            if err is not None:
                assert err["code"] == "bad_request"

    def test_oversized_frame_rejected_without_allocation(self, dealer):
        address, _ = dealer
        with socket.create_connection(address, timeout=10) as sock:
            # declares a 1 GiB payload; the server must refuse from the
            # length field alone, before any body bytes arrive
            sock.sendall(b"VSP1" + bytes([P.MSG_LIST]) + struct.pack("<I", 1 << 30))
            err = self._read_error_then_close(sock)
            if err is not None:
                assert err["code"] == "bad_request"

    def test_client_rejects_oversized_reply_declaration(self):
        probe = socket.socket()
        probe.bind(("127.0.0.1", 0))
        probe.listen(1)

        def fake_server():
            conn, _ = probe.accept()
            P.recv_frame(conn, P.DEFAULT_MAX_FRAME)
            conn.sendall(b"VSP1" + bytes([P.MSG_LIST | P.REPLY_BIT])
                         + struct.pack("<I", 1 << 31))
            conn.close()

        t = threading.Thread(target=fake_server, daemon=True)
        t.start()
        client = VspClient(probe.getsockname())
        with pytest.raises(ProtocolError):
            client.list_slides()
        client.close()
        probe.close()


def test_many_concurrent_clients(dealer):
    address, slides = dealer
    header, data, _ = slides["pertile"]
    errors = []

    def worker(seed):
        rng = np.random.default_rng(seed)
        try:
            with VspClient(address) as client:
                for _ in range(20):
                    li = int(rng.integers(0, len(header.fovs)))
                    fov = header.fovs[li]
                    got = client.get_tile("pertile", fov.r, fov.c, w=0)
                    if not np.array_equal(got, data[fov.linear_index][0]):
                        errors.append(f"mismatch at {li}")
        except Exception as exc:  # noqa: BLE001
            errors.append(repr(exc))

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(60)
    assert not errors


@pytest.fixture(scope="module")
def gateway(dealer):
    address, slides = dealer
    server = http_gateway(address, ("127.0.0.1", 0))
    yield server.server_address, slides
    server.shutdown()


class TestGateway:
    def _get(self, address, path):
        conn = http.client.HTTPConnection(*address, timeout=10)
        conn.request("GET", path)
        resp = conn.getresponse()
        body = resp.read()
        headers = dict(resp.getheaders())
        conn.close()
        return resp.status, headers, body

    def test_slides_listing(self, gateway):
        address, slides = gateway
        status, headers, body = self._get(address, "/slides")
        assert status == 200
        assert headers["Access-Control-Allow-Origin"] == "*"
        assert sorted(json.loads(body)) == sorted(slides)

    def test_header_endpoint(self, gateway):
        address, slides = gateway
        status, _, body = self._get(address, "/slides/packed/header")
        assert status == 200
        assert json.loads(body) == slides["packed"][0].to_json_dict()

    def test_render_matches_local_bit_for_bit(self, gateway):
        address, slides = gateway
        header, data, path = slides["pertile"]
        params = default_params(header.tile.colours)
        vp = ViewportRect(3.0, 120.0, 5.0, 170.0)
        with open_slide(path) as reader:
            tree = build_tree([(fov_bounds(f, header.tile), f.linear_index)
                               for f in header.fovs])
            local = png_bytes(render_viewport(reader, tree, vp, (96, 128), params))
        qs = "&".join(f"{k}={v}" for k, v in params_to_query(params).items())
        status, headers, body = self._get(
            address,
            f"/slides/pertile/render?x0=3.0&x1=120.0&y0=5.0&y1=170.0&w=96&h=128&{qs}")
        assert status == 200
        assert headers["Content-Type"] == "image/png"
        assert body == local

    def test_tile_endpoint_is_png(self, gateway):
        address, _ = gateway
        status, headers, body = self._get(address, "/slides/packed/tile/0/0/1.png")
        assert status == 200
        assert body[:8] == b"\x89PNG\r\n\x1a\n"

    def test_unknown_slide_404(self, gateway):
        address, _ = gateway
        status, _, body = self._get(address, "/slides/nope/header")
        assert status == 404
        assert json.loads(body)["code"] == "not_found"

    def test_malformed_query_400(self, gateway):
        address, _ = gateway
        status, _, body = self._get(address,
                                    "/slides/packed/render?x0=a&x1=b&y0=0&y1=1&w=8&h=8")
        assert status == 400
        assert json.loads(body)["code"] == "bad_request"

    def test_unknown_route_404(self, gateway):
        address, _ = gateway
        status, _, _ = self._get(address, "/not/a/route")
        assert status == 404
