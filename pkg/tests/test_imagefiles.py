"""On-disk image formats: 8/16-bit PGM and RGBA PNG."""
import numpy as np
import pytest

from subjectcut.imagefiles import (
    read_pgm8,
    read_pgm16,
    read_png_rgb,
    read_png_rgba,
    write_pgm8,
    write_pgm16,
    write_png_rgb,
    write_png_rgba,
)


class TestPgm8:
    def test_roundtrip(self, tmp_path):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([91])))
        data = rng.integers(0, 256, size=(11, 7), dtype=np.uint8)
        path = tmp_path / "m.pgm"
        write_pgm8(path, data)
        assert np.array_equal(read_pgm8(path), data)

    def test_header_layout_is_fixed(self, tmp_path):
        path = tmp_path / "m.pgm"
        write_pgm8(path, np.zeros((2, 3), dtype=np.uint8))
        assert path.read_bytes() == b"P5\n3 2\n255\n" + b"\x00" * 6

    def test_comment_lines_tolerated_on_read(self, tmp_path):
        path = tmp_path / "m.pgm"
        path.write_bytes(b"P5\n# made elsewhere\n2 2\n255\n\x01\x02\x03\x04")
        assert read_pgm8(path).tolist() == [[1, 2], [3, 4]]

    def test_rejects_wrong_dtype_and_shape(self, tmp_path):
        with pytest.raises(ValueError):
            write_pgm8(tmp_path / "x.pgm", np.zeros((2, 2), dtype=np.uint16))
        with pytest.raises(ValueError):
            write_pgm8(tmp_path / "x.pgm", np.zeros((2, 2, 3), dtype=np.uint8))

    def test_rejects_truncated_and_foreign_files(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x00")
        with pytest.raises(ValueError, match="truncated"):
            read_pgm8(path)
        path.write_bytes(b"P6\n2 2\n255\n" + b"\x00" * 12)
        with pytest.raises(ValueError, match="P5"):
            read_pgm8(path)

    def test_maxval_mismatch_between_variants(self, tmp_path):
        path = tmp_path / "m.pgm"
        write_pgm16(path, np.zeros((2, 2)))
        with pytest.raises(ValueError, match="maxval"):
            read_pgm8(path)


class TestPgm16:
    def test_roundtrip_resolution(self, tmp_path):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([92])))
        data = rng.uniform(size=(9, 5))
        path = tmp_path / "m.pgm"
        write_pgm16(path, data)
        back = read_pgm16(path)
        # quantized to 1/65535 steps
        assert np.max(np.abs(back - data)) <= 0.5 / 65535.0

    def test_endpoints_exact(self, tmp_path):
        path = tmp_path / "m.pgm"
        write_pgm16(path, np.array([[0.0, 1.0]]))
        back = read_pgm16(path)
        assert back[0, 0] == 0.0 and back[0, 1] == 1.0

    def test_big_endian_on_disk(self, tmp_path):
        path = tmp_path / "m.pgm"
        write_pgm16(path, np.array([[1.0]]))
        assert path.read_bytes().endswith(b"\xff\xff")
        write_pgm16(path, np.array([[128.0 / 65535.0]]))
        assert path.read_bytes().endswith(b"\x00\x80")

    def test_range_and_finiteness_enforced(self, tmp_path):
        for bad in ([[1.5]], [[-0.1]], [[np.nan]]):
            with pytest.raises(ValueError):
                write_pgm16(tmp_path / "x.pgm", np.array(bad))

    def test_wrong_maxval_rejected(self, tmp_path):
        path = tmp_path / "m.pgm"
        write_pgm8(path, np.zeros((2, 2), dtype=np.uint8))
        with pytest.raises(ValueError, match="maxval"):
            read_pgm16(path)


class TestPng:
    def test_rgba_roundtrip(self, tmp_path):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([93])))
        rgba = rng.integers(0, 256, size=(6, 8, 4), dtype=np.uint8)
        path = tmp_path / "m.png"
        write_png_rgba(path, rgba)
        assert np.array_equal(read_png_rgba(path), rgba)

    def test_rgb_roundtrip(self, tmp_path):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([94])))
        rgb = rng.integers(0, 256, size=(6, 8, 3), dtype=np.uint8)
        path = tmp_path / "m.png"
        write_png_rgb(path, rgb)
        assert np.array_equal(read_png_rgb(path), rgb)

    def test_rgb_read_of_rgba_file_drops_alpha(self, tmp_path):
        rgba = np.zeros((2, 2, 4), dtype=np.uint8)
        rgba[..., 0] = 9
        rgba[..., 3] = 255
        path = tmp_path / "m.png"
        write_png_rgba(path, rgba)
        rgb = read_png_rgb(path)
        assert rgb.shape == (2, 2, 3)
        assert (rgb[..., 0] == 9).all()
