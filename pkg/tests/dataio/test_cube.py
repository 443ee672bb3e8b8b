"""
Cube and Factor File Tests

Binary and CSV cube formats, their failure locations, and the CSV factor
tables.
"""

import struct

import numpy as np
import pytest

from knmf.dataio import read_abundances, read_cube, read_endmembers, write_abundances, write_cube, write_endmembers
from knmf.dataio.cube import HEADER_SIZE, MAGIC
from knmf.errors import CubeFormatError
from knmf.factorization import HyperCube
from knmf.regularizers import fold_abundance, pixel_coordinates


@pytest.fixture
def cube():
    """Random 4-band cube of a 2×3 image."""
    return HyperCube(np.random.default_rng(60).random((4, 6)), rows=2, cols=3)


def raw_cube(L, T, a, b, values):
    return struct.pack("<4sIIII", MAGIC, L, T, a, b) + np.asarray(values, dtype="<f8").tobytes()


class TestBinaryCube:
    """Test the binary cube format."""

    def test_round_trip(self, cube, tmp_path):
        """Write then read is bit-identical."""
        path = write_cube(tmp_path / "scene.hsi", cube)
        back = read_cube(path)
        np.testing.assert_array_equal(back.X, cube.X)
        assert back.shape == (2, 3)

    def test_layout(self, cube, tmp_path):
        """20-byte header followed by 8·L·T payload bytes."""
        path = write_cube(tmp_path / "scene.hsi", cube)
        raw = path.read_bytes()
        assert len(raw) == HEADER_SIZE + 8 * 24
        assert raw[:4] == b"HSI1"
        assert struct.unpack("<IIII", raw[4:20]) == (4, 6, 2, 3)

    def test_truncated_payload(self, tmp_path):
        """95 payload bytes where 96 are required."""
        path = tmp_path / "short.hsi"
        path.write_bytes(raw_cube(2, 6, 2, 3, np.ones(12))[:-1])
        with pytest.raises(CubeFormatError) as excinfo:
            read_cube(path)
        assert excinfo.value.offset == HEADER_SIZE + 95

    def test_truncated_header(self, tmp_path):
        """Fewer than 20 bytes."""
        path = tmp_path / "tiny.hsi"
        path.write_bytes(b"HSI1\x02\x00")
        with pytest.raises(CubeFormatError):
            read_cube(path)

    def test_bad_magic(self, tmp_path):
        """Magic mismatch is reported at offset 0."""
        path = tmp_path / "bad.hsi"
        path.write_bytes(b"XXXX" + raw_cube(1, 1, 1, 1, [0.5])[4:])
        with pytest.raises(CubeFormatError) as excinfo:
            read_cube(path)
        assert excinfo.value.offset == 0

    def test_pixel_count_mismatch(self, tmp_path):
        """T must equal a·b."""
        path = tmp_path / "shape.hsi"
        path.write_bytes(raw_cube(1, 5, 2, 3, np.ones(5)))
        with pytest.raises(CubeFormatError) as excinfo:
            read_cube(path)
        assert excinfo.value.offset == 8

    def test_trailing_bytes(self, tmp_path):
        """Extra bytes after the payload are rejected."""
        path = tmp_path / "long.hsi"
        path.write_bytes(raw_cube(1, 2, 1, 2, [0.1, 0.2]) + b"\x00")
        with pytest.raises(CubeFormatError):
            read_cube(path)

    def test_negative_value(self, tmp_path):
        """The offending value's byte offset is reported."""
        path = tmp_path / "neg.hsi"
        path.write_bytes(raw_cube(1, 3, 1, 3, [0.1, 0.2, -0.3]))
        with pytest.raises(CubeFormatError) as excinfo:
            read_cube(path)
        assert excinfo.value.offset == HEADER_SIZE + 16

    def test_missing_file(self, tmp_path):
        """Unreadable paths surface as OSError."""
        with pytest.raises(OSError):
            read_cube(tmp_path / "absent.hsi")

    def test_pixel_order_matches_fold(self, tmp_path):
        """Stored pixel t sits at row ceil(t/b), column t - (row-1)b."""
        X = np.arange(12.0).reshape(1, 12)
        back = read_cube(write_cube(tmp_path / "order.hsi", HyperCube(X, rows=3, cols=4)))
        M = fold_abundance(back.X, 0, back.shape)
        for t in range(1, 13):
            i, j = pixel_coordinates(t, 4)
            assert M[i - 1, j - 1] == t - 1


class TestCsvCube:
    """Test the CSV fallback."""

    def test_round_trip(self, cube, tmp_path):
        """17 significant digits round-trip exactly."""
        back = read_cube(write_cube(tmp_path / "scene.csv", cube))
        np.testing.assert_array_equal(back.X, cube.X)
        assert back.shape == cube.shape

    def test_header_line(self, cube, tmp_path):
        """First line is L,T,a,b."""
        path = write_cube(tmp_path / "scene.csv", cube)
        assert path.read_text().splitlines()[0] == "4,6,2,3"

    def test_negative_entry_location(self, tmp_path):
        """Negative value reported by file row and 1-based column."""
        path = tmp_path / "neg.csv"
        path.write_text("2,3,1,3\n0.1,0.2,0.3\n0.4,-0.5,0.6\n")
        with pytest.raises(CubeFormatError) as excinfo:
            read_cube(path)
        assert (excinfo.value.row, excinfo.value.column) == (3, 2)

    def test_non_numeric(self, tmp_path):
        """Text in the payload is a format error."""
        path = tmp_path / "text.csv"
        path.write_text("1,3,1,3\n0.1,abc,0.3\n")
        with pytest.raises(CubeFormatError):
            read_cube(path)

    def test_non_numeric_location(self, tmp_path):
        """The offending cell is reported by file row and column."""
        path = tmp_path / "text.csv"
        path.write_text("2,3,1,3\n0.1,0.2,0.3\n0.4,0.5,xyz\n")
        with pytest.raises(CubeFormatError, match="xyz") as excinfo:
            read_cube(path)
        assert (excinfo.value.row, excinfo.value.column) == (3, 3)

    def test_bad_header(self, tmp_path):
        """Header must hold four integers."""
        path = tmp_path / "header.csv"
        path.write_text("bands,pixels\n0.1,0.2\n")
        with pytest.raises(CubeFormatError):
            read_cube(path)

    def test_shape_mismatch(self, tmp_path):
        """Payload must hold L rows of T values."""
        path = tmp_path / "rows.csv"
        path.write_text("2,2,1,2\n0.1,0.2\n")
        with pytest.raises(CubeFormatError):
            read_cube(path)


class TestFactorFiles:
    """Test endmember and abundance tables."""

    def test_endmember_round_trip(self, tmp_path):
        """One column per endmember, exact values."""
        E = np.random.default_rng(61).random((5, 3))
        path = write_endmembers(tmp_path / "E.csv", E)
        assert path.read_text().splitlines()[0] == "e1,e2,e3"
        np.testing.assert_array_equal(read_endmembers(path), E)

    def test_abundance_round_trip(self, tmp_path):
        """Stored one row per pixel, read back as N×T."""
        A = np.random.default_rng(62).random((2, 7))
        path = write_abundances(tmp_path / "A.csv", A)
        lines = path.read_text().splitlines()
        assert lines[0] == "a1,a2"
        assert len(lines) == 8
        np.testing.assert_array_equal(read_abundances(path), A)

    def test_non_finite(self, tmp_path):
        """NaN entries are rejected."""
        path = tmp_path / "E.csv"
        path.write_text("e1\n0.5\nnan\n")
        with pytest.raises(CubeFormatError):
            read_endmembers(path)
