import os

import numpy as np
import pytest

from vslide.container import (
    Hyperslab,
    create_slide,
    open_slide,
    rewrite_with_mip_levels,
)
from vslide.errors import (
    CorruptionError,
    DomainError,
    FormatError,
    UnfinalizedFileError,
    UnsupportedOperationError,
)
from vslide.mip import mignify
from vslide.model import LayoutKind

from conftest import make_header, random_planes, write_slide

LAYOUTS = [
    (LayoutKind.PACKED2D, {"chunk_div": 2}),
    (LayoutKind.LINEAR, {}),
    (LayoutKind.PER_TILE, {}),
]
CODECS = [("RAW",), ("DEFLATE",), ("BITSHUFFLE16", "DEFLATE")]


@pytest.mark.parametrize("layout,kw", LAYOUTS)
@pytest.mark.parametrize("codec", CODECS)
def test_roundtrip_all_layouts_and_codecs(tmp_path, layout, kw, codec):
    header = make_header(layout=layout, codec=codec, **kw)
    data = random_planes(header, seed=1)
    path = write_slide(tmp_path / "s.vsf", header, data)
    with open_slide(path) as reader:
        assert reader.header.to_json_dict() == header.to_json_dict()
        for fov in header.fovs:
            got = reader.read_fov(fov.r, fov.c)
            assert np.array_equal(got, data[fov.linear_index])


@pytest.mark.parametrize("layout,kw", LAYOUTS)
def test_sparse_mosaic_roundtrip(tmp_path, layout, kw):
    present = {(0, 0), (0, 2), (2, 1), (2, 3)}
    header = make_header(layout=layout, present=present, **kw)
    data = random_planes(header, seed=2)
    path = write_slide(tmp_path / "s.vsf", header, data)
    with open_slide(path) as reader:
        for fov in header.fovs:
            assert np.array_equal(reader.read_fov(fov.r, fov.c),
                                  data[fov.linear_index])
        assert reader.read_fov(0, 1) is None
        assert reader.read_fov(1, 1) is None


def test_minimal_single_tile_slide(tmp_path):
    header = make_header(rows=1, cols=1, tile=(8, 8, 1), codec=("RAW",))
    data = random_planes(header)
    path = write_slide(tmp_path / "one.vsf", header, data)
    with open_slide(path) as reader:
        assert np.array_equal(reader.read_fov(0, 0, 0), data[0][0])


def test_empty_sparse_mosaic_is_valid(tmp_path):
    header = make_header(present=set())
    path = tmp_path / "empty.vsf"
    with create_slide(path, header) as writer:
        pass
    with open_slide(path) as reader:
        assert reader.header.fovs == ()
        assert reader.read_fov(0, 0) is None


def test_attributes_roundtrip_verbatim(tmp_path):
    header = make_header(attributes={"slide_name": "John Doe",
                                     "assay": "fish", "stains": ["dapi", "cy3"]})
    data = random_planes(header)
    path = write_slide(tmp_path / "a.vsf", header, data)
    with open_slide(path) as reader:
        assert reader.header.attributes["slide_name"] == "John Doe"
        assert reader.header.attributes == header.attributes


def test_compressed_smaller_than_raw_on_low_dynamic(tmp_path):
    header = make_header(rows=4, cols=5, tile=(256, 208, 3),
                         codec=("BITSHUFFLE16", "DEFLATE"))
    data = random_planes(header, seed=3, dynamic=4096)
    path = write_slide(tmp_path / "c.vsf", header, data)
    raw_size = 4 * 5 * 3 * 256 * 208 * 2
    assert os.path.getsize(path) < raw_size


def test_duplicate_fov_rejected(tmp_path):
    header = make_header()
    data = random_planes(header)
    with create_slide(tmp_path / "d.vsf", header) as writer:
        writer.write_fov(header.fovs[0], data[0])
        with pytest.raises(DomainError):
            writer.write_fov(header.fovs[0], data[0])
        for fov in header.fovs[1:]:
            writer.write_fov(fov, data[fov.linear_index])


def test_shape_mismatch_rejected(tmp_path):
    header = make_header()
    writer = create_slide(tmp_path / "m.vsf", header)
    with pytest.raises(DomainError):
        writer.write_fov(header.fovs[0], np.zeros((3, 10, 10), np.uint16))
    writer.abort()


def test_undeclared_fov_rejected(tmp_path):
    header = make_header(present={(0, 0)})
    writer = create_slide(tmp_path / "u.vsf", header)
    with pytest.raises(DomainError):
        writer.write_fov((1, 1), np.zeros((3, 64, 48), np.uint16))
    writer.abort()


def test_unfinalized_file_detected(tmp_path):
    header = make_header()
    data = random_planes(header)
    path = tmp_path / "kill.vsf"
    writer = create_slide(path, header)
    writer.write_fov(header.fovs[0], data[0])
    writer.abort()  # simulates a crash before finalize
    with pytest.raises(UnfinalizedFileError):
        open_slide(path)


def test_missing_fovs_block_finalize(tmp_path):
    header = make_header()
    writer = create_slide(tmp_path / "inc.vsf", header)
    with pytest.raises(DomainError):
        writer.finalize()
    writer.abort()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.vsf"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(FormatError):
        open_slide(path)


def test_crc_detects_bit_flips(tmp_path):
    header = make_header(rows=2, cols=2, codec=("DEFLATE",))
    data = random_planes(header, seed=4)
    path = write_slide(tmp_path / "flip.vsf", header, data)
    with open_slide(path) as reader:
        entry = reader.index[0]
    pristine = path.read_bytes()
    rng = np.random.default_rng(0)
    for _ in range(20):
        blob = bytearray(pristine)
        pos = entry.offset + int(rng.integers(0, entry.compressed_len))
        blob[pos] ^= 1 << int(rng.integers(0, 8))
        path.write_bytes(bytes(blob))
        with open_slide(path) as reader:
            with pytest.raises(CorruptionError):
                reader.read_fov(header.fovs[0].r, header.fovs[0].c)


def test_index_entries_cover_chunks_exactly_once(tmp_path):
    header = make_header(layout=LayoutKind.PACKED2D, chunk_div=2, mip_levels=(1, 2))
    data = random_planes(header, seed=5)
    path = write_slide(tmp_path / "idx.vsf", header, data)
    with open_slide(path) as reader:
        spans = sorted((e.offset, e.offset + e.compressed_len) for e in reader.index)
        for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
            assert e0 <= s1  # non-overlapping
        assert len(reader.index) == reader.plan.total


class TestChunkCounting:
    def test_packed_single_colour_read_touches_n_squared_chunks(self, tmp_path):
        header = make_header(layout=LayoutKind.PACKED2D, chunk_div=2)
        data = random_planes(header, seed=6)
        path = write_slide(tmp_path / "n2.vsf", header, data)
        with open_slide(path) as reader:
            reader.reset_counters()
            reader.read_fov(1, 1, colour=0)
            assert reader.chunks_read == 4  # (H/h)*(W/w) = 2*2

    def test_hyperslab_chunk_touch_matches_analytic_count(self, tmp_path):
        header = make_header(layout=LayoutKind.PACKED2D, chunk_div=2)
        data = random_planes(header, seed=7)
        path = write_slide(tmp_path / "hs.vsf", header, data)
        ch, cw = header.chunk.h, header.chunk.w
        with open_slide(path) as reader:
            rng = np.random.default_rng(8)
            ds_h = header.mosaic.rows * header.tile.colours * header.tile.height
            ds_w = header.mosaic.cols * header.tile.width
            for _ in range(25):
                r0 = int(rng.integers(0, ds_h - 1))
                r1 = int(rng.integers(r0 + 1, ds_h + 1))
                c0 = int(rng.integers(0, ds_w - 1))
                c1 = int(rng.integers(c0 + 1, ds_w + 1))
                reader.reset_counters()
                region = reader.read_packed_region(Hyperslab(r0, r1, c0, c1))
                expected = (r1 - 1) // ch - r0 // ch + 1
                expected *= (c1 - 1) // cw - c0 // cw + 1
                assert reader.chunks_read == expected
                assert region.shape == (r1 - r0, c1 - c0)

    def test_hyperslab_pixels_match_full_read(self, tmp_path):
        header = make_header(layout=LayoutKind.PACKED2D, chunk_div=2,
                             rows=2, cols=2, tile=(32, 24, 2))
        data = random_planes(header, seed=9)
        path = write_slide(tmp_path / "px.vsf", header, data)
        # materialize the full packed dataset from the written planes
        full = np.zeros((2 * 2 * 32, 2 * 24), np.uint16)
        for fov in header.fovs:
            for w in range(2):
                r0 = fov.r * 2 * 32 + w * 32
                full[r0:r0 + 32, fov.c * 24:(fov.c + 1) * 24] = \
                    data[fov.linear_index][w]
        with open_slide(path) as reader:
            region = reader.read_packed_region(Hyperslab(5, 100, 3, 40))
            assert np.array_equal(region, full[5:100, 3:40])


class TestSlab:
    def test_slab_equals_concatenated_fovs(self, tmp_path):
        header = make_header(layout=LayoutKind.LINEAR)
        data = random_planes(header, seed=10)
        path = write_slide(tmp_path / "slab.vsf", header, data)
        with open_slide(path) as reader:
            slab = reader.read_slab(2, 7)
            ref = np.concatenate([data[i].reshape(-1, 48) for i in range(2, 7)])
            assert np.array_equal(slab, ref)

    def test_single_fov_slab_equals_read_fov(self, tmp_path):
        header = make_header(layout=LayoutKind.LINEAR)
        data = random_planes(header, seed=11)
        path = write_slide(tmp_path / "one.vsf", header, data)
        with open_slide(path) as reader:
            slab = reader.read_slab(3, 4)
            assert np.array_equal(slab, reader.read_fov(0, 3).reshape(-1, 48))

    def test_full_mosaic_slab(self, tmp_path):
        header = make_header(layout=LayoutKind.LINEAR)
        data = random_planes(header, seed=12)
        path = write_slide(tmp_path / "full.vsf", header, data)
        with open_slide(path) as reader:
            slab = reader.read_slab(0, 12)
            ref = np.concatenate([data[i].reshape(-1, 48) for i in range(12)])
            assert np.array_equal(slab, ref)

    def test_layout_mismatch(self, small_slide, tmp_path):
        header = make_header(layout=LayoutKind.PER_TILE)
        data = random_planes(header)
        path = write_slide(tmp_path / "pt.vsf", header, data)
        with open_slide(path) as reader:
            with pytest.raises(UnsupportedOperationError):
                reader.read_slab(0, 2)

    def test_empty_range(self, tmp_path):
        header = make_header(layout=LayoutKind.LINEAR)
        data = random_planes(header)
        path = write_slide(tmp_path / "e.vsf", header, data)
        with open_slide(path) as reader:
            assert reader.read_slab(5, 5).shape == (0, 48)


class TestMipLevels:
    def test_stored_mips_match_mignify_oracle(self, tmp_path):
        header = make_header(mip_levels=(1, 2, 4))
        data = random_planes(header, seed=13)
        path = write_slide(tmp_path / "mip.vsf", header, data)
        with open_slide(path) as reader:
            for fov in header.fovs:
                for lvl in (2, 4):
                    got = reader.read_fov(fov.r, fov.c, colour=1, level=lvl)
                    assert np.array_equal(got, mignify(data[fov.linear_index][1], lvl))

    def test_level_one_is_the_identity_dataset(self, tmp_path):
        header = make_header(mip_levels=(1, 2))
        data = random_planes(header, seed=14)
        path = write_slide(tmp_path / "l1.vsf", header, data)
        with open_slide(path) as reader:
            assert np.array_equal(reader.read_fov(0, 0, level=1), data[0])

    def test_rewrite_adds_levels_idempotently(self, tmp_path):
        header = make_header(rows=2, cols=2)
        data = random_planes(header, seed=15)
        path = write_slide(tmp_path / "rw.vsf", header, data)
        new_header = rewrite_with_mip_levels(path, [8, 16])
        assert new_header.mip_levels == (1, 8, 16)
        again = rewrite_with_mip_levels(path, [8, 16])  # no-op
        assert again.mip_levels == (1, 8, 16)
        with open_slide(path) as reader:
            for fov in header.fovs:
                assert np.array_equal(reader.read_fov(fov.r, fov.c),
                                      data[fov.linear_index])
                got = reader.read_fov(fov.r, fov.c, colour=0, level=16)
                assert np.array_equal(got, mignify(data[fov.linear_index][0], 16))

    def test_bad_level_rejected(self, tmp_path):
        header = make_header(rows=1, cols=1)
        data = random_planes(header)
        path = write_slide(tmp_path / "bad.vsf", header, data)
        with pytest.raises(DomainError):
            rewrite_with_mip_levels(path, [3])

    def test_unstored_level_read_rejected(self, small_slide):
        path, header, _ = small_slide
        with open_slide(path) as reader:
            with pytest.raises(DomainError):
                reader.read_fov(0, 0, level=8)
