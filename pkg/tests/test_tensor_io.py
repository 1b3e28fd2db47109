"""Tests for the .etz tensor format."""

import struct
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.epipolar_mvd.errors import TensorFormatError
from src.epipolar_mvd.tensor import decode_tensor, encode_tensor, tensor_read, tensor_write


class TestEncoding:
    """Tests for the byte layout."""

    def test_header(self):
        """Test magic, version, dtype, ndim and dims come first."""
        data = encode_tensor(np.zeros((2, 3)))
        assert data[:4] == b"EPTN"
        assert data[4:7] == bytes([1, 0, 2])
        assert struct.unpack("<2I", data[7:15]) == (2, 3)
        assert len(data) == 15 + 4 * 6

    def test_scalar(self):
        """Test a 0-d tensor stores one value and no dims."""
        data = encode_tensor(np.array(2.5))
        assert len(data) == 7 + 4
        assert decode_tensor(data) == 2.5

    def test_float32_values_survive(self):
        """Test values representable in float32 come back exactly."""
        values = np.array([[0.5, -1.25], [3.0, 1e-3]], dtype=np.float32).astype(np.float64)
        assert np.array_equal(decode_tensor(encode_tensor(values)), values)

    def test_bytes_are_stable(self):
        """Test re-encoding a decoded tensor is byte-identical."""
        data = encode_tensor(np.linspace(-1.0, 1.0, 12).reshape(3, 4))
        assert encode_tensor(decode_tensor(data)) == data


class TestMalformed:
    """Tests for decoding errors."""

    def test_bad_magic(self):
        """Test a wrong magic is rejected."""
        data = b"NOPE" + encode_tensor(np.zeros(2))[4:]
        with pytest.raises(TensorFormatError, match="magic"):
            decode_tensor(data)

    def test_bad_version(self):
        """Test an unknown version is rejected."""
        data = bytearray(encode_tensor(np.zeros(2)))
        data[4] = 2
        with pytest.raises(TensorFormatError, match="version"):
            decode_tensor(bytes(data))

    def test_truncated_payload(self):
        """Test a short payload is rejected."""
        with pytest.raises(TensorFormatError):
            decode_tensor(encode_tensor(np.zeros((2, 2)))[:-1])

    def test_truncated_header(self):
        """Test fewer bytes than a header are rejected."""
        with pytest.raises(TensorFormatError):
            decode_tensor(b"EPT")


class TestFiles:
    """Tests for tensor_write / tensor_read."""

    def test_file_round_trip(self, tmp_path):
        """Test a written file reads back and rewrites byte-identically."""
        path = tmp_path / "nested" / "x.etz"
        tensor = np.arange(24, dtype=np.float64).reshape(2, 3, 4)
        tensor_write(tensor, path)
        restored = tensor_read(path)
        assert np.array_equal(restored, tensor)
        tensor_write(restored, tmp_path / "y.etz")
        assert (tmp_path / "y.etz").read_bytes() == path.read_bytes()

    def test_missing_file(self, tmp_path):
        """Test a missing file raises OSError."""
        with pytest.raises(OSError):
            tensor_read(tmp_path / "absent.etz")
