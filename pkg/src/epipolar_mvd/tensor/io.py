"""Binary tensor files (``.etz``).

Layout, little-endian, no padding, no compression::

    magic    4 bytes   b"EPTN"
    version  u8        1
    dtype    u8        0 (float32)
    ndim     u8
    dims     ndim x u32
    payload  prod(dims) x f32, row-major

Values are stored as float32 and promoted to float64 on read.
"""

import struct
from pathlib import Path

import numpy as np

from ..errors import TensorFormatError
from ..utils.logger import get_logger
from .core import Tensor

logger = get_logger(__name__)

MAGIC = b"EPTN"
VERSION = 1
DTYPE_F32 = 0
_HEADER = struct.Struct("<4sBBB")


def encode_tensor(tensor: np.ndarray) -> bytes:
    """Serialize a tensor to ``.etz`` bytes."""
    array = np.asarray(tensor)
    if array.ndim > 255:
        raise TensorFormatError(f"Cannot store {array.ndim} dimensions")
    if any(d > 0xFFFFFFFF for d in array.shape):
        raise TensorFormatError(f"Dimension too large for u32: {array.shape}")
    header = _HEADER.pack(MAGIC, VERSION, DTYPE_F32, array.ndim)
    dims = struct.pack(f"<{array.ndim}I", *array.shape)
    payload = np.ascontiguousarray(array, dtype="<f4").tobytes()
    return header + dims + payload


def decode_tensor(data: bytes) -> Tensor:
    """Parse ``.etz`` bytes back into a float64 tensor."""
    if len(data) < _HEADER.size:
        raise TensorFormatError(f"Truncated header ({len(data)} bytes)")
    magic, version, dtype, ndim = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise TensorFormatError(f"Bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise TensorFormatError(f"Unsupported version {version}")
    if dtype != DTYPE_F32:
        raise TensorFormatError(f"Unsupported dtype code {dtype}")

    offset = _HEADER.size
    dims_size = 4 * ndim
    if len(data) < offset + dims_size:
        raise TensorFormatError("Truncated dimension table")
    shape = struct.unpack_from(f"<{ndim}I", data, offset)
    offset += dims_size

    count = int(np.prod(shape, dtype=np.int64))
    payload = data[offset:]
    if len(payload) != 4 * count:
        raise TensorFormatError(
            f"Payload holds {len(payload)} bytes, shape {tuple(shape)} needs {4 * count}"
        )
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return values.reshape(shape)


def tensor_write(tensor: np.ndarray, path: Path | str) -> None:
    """Write ``tensor`` to ``path`` in ``.etz`` format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensor(tensor))
    logger.debug(f"Wrote tensor {np.shape(tensor)} to {path}")


def tensor_read(path: Path | str) -> Tensor:
    """
    Read an ``.etz`` file.

    Raises:
        OSError: If the file cannot be read
        TensorFormatError: If the content is malformed
    """
    return decode_tensor(Path(path).read_bytes())
