"""PPM/PGM round trips and header robustness."""

import numpy as np
import pytest

from mvformer.imageio import ImageFormatError, read_pgm, read_ppm, write_pgm, write_ppm


class TestRoundTrips:
    def test_ppm(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
        path = tmp_path / "img.ppm"
        write_ppm(path, img)
        assert np.array_equal(read_ppm(path), img)

    def test_pgm(self, tmp_path):
        rng = np.random.default_rng(1)
        img = rng.integers(0, 256, size=(4, 9), dtype=np.uint8)
        path = tmp_path / "img.pgm"
        write_pgm(path, img)
        assert np.array_equal(read_pgm(path), img)

    def test_header_comments_and_whitespace(self, tmp_path):
        img = np.arange(12, dtype=np.uint8).reshape(2, 2, 3)
        path = tmp_path / "c.ppm"
        payload = img.tobytes()
        path.write_bytes(b"P6\n# a comment\n 2 # inline sizes\n2\n# another\n255\n" + payload)
        assert np.array_equal(read_ppm(path), img)


class TestGuards:
    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "x.ppm"
        path.write_bytes(b"P3\n2 2\n255\n")
        with pytest.raises(ImageFormatError, match="P6"):
            read_ppm(path)

    def test_unsupported_maxval(self, tmp_path):
        path = tmp_path / "x.ppm"
        path.write_bytes(b"P6\n1 1\n65535\n" + b"\x00" * 6)
        with pytest.raises(ImageFormatError, match="maxval"):
            read_ppm(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "x.ppm"
        path.write_bytes(b"P6\n2 2\n255\n" + b"\x00" * 5)
        with pytest.raises(ImageFormatError, match="payload"):
            read_ppm(path)

    def test_writer_rejects_bad_shape(self, tmp_path):
        with pytest.raises(ImageFormatError, match="h, w, 3"):
            write_ppm(tmp_path / "x.ppm", np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(ImageFormatError, match="h, w"):
            write_pgm(tmp_path / "x.pgm", np.zeros((4, 4, 3), dtype=np.uint8))
