"""Bilinear interpolation on pixel-centred feature maps and its adjoint.

Pixel ``(i, j)`` has its centre at ``(u, v) = (j + 0.5, i + 0.5)``. Samples
within half a pixel of the border clamp to the edge pixels.
"""

import numpy as np

from ..errors import SampleRangeError, ShapeError
from ..tensor import BoolTensor, Tensor, as_tensor

TAPS = 4


def bilinear_taps(pixels: Tensor, height: int, width: int) -> tuple[Tensor, Tensor]:
    """
    Flat pixel indices and weights of the four interpolation taps.

    Args:
        pixels: Sample positions [..., 2] as (u, v), assumed inside the map
        height: Map height
        width: Map width

    Returns:
        Tuple of (indices [..., 4] into the row-major ``H*W`` grid, weights [..., 4])
    """
    pixels = as_tensor(pixels)
    x = pixels[..., 0] - 0.5
    y = pixels[..., 1] - 0.5
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0

    def clamp(values: Tensor, size: int) -> Tensor:
        return np.clip(values, 0, size - 1).astype(np.int64)

    cols = (clamp(x0, width), clamp(x0 + 1, width))
    rows = (clamp(y0, height), clamp(y0 + 1, height))
    indices = np.stack(
        [
            rows[0] * width + cols[0],
            rows[0] * width + cols[1],
            rows[1] * width + cols[0],
            rows[1] * width + cols[1],
        ],
        axis=-1,
    )
    weights = np.stack(
        [(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy],
        axis=-1,
    )
    return indices, weights


def in_bounds(pixels: Tensor, height: int, width: int) -> BoolTensor:
    """True where ``(u, v)`` lies in ``[0, W) x [0, H)``."""
    u = pixels[..., 0]
    v = pixels[..., 1]
    return (u >= 0.0) & (u < width) & (v >= 0.0) & (v < height)


def bilinear_sample(feature_map: Tensor, u: float, v: float) -> Tensor:
    """
    Interpolate ``feature_map [H, W, C]`` at pixel ``(u, v)``.

    Raises:
        SampleRangeError: If ``(u, v)`` is outside ``[0, W) x [0, H)``
    """
    if feature_map.ndim != 3:
        raise ShapeError(f"bilinear_sample: expected [H, W, C], got {feature_map.shape}")
    height, width, _ = feature_map.shape
    if not (0.0 <= u < width and 0.0 <= v < height):
        raise SampleRangeError(f"Sample ({u}, {v}) outside {width}x{height} map")
    indices, weights = bilinear_taps(np.array([u, v]), height, width)
    flat = feature_map.reshape(height * width, -1)
    return weights @ flat[indices]


def bilinear_gather(flat_map: Tensor, indices: Tensor, weights: Tensor) -> Tensor:
    """Batched interpolation: ``flat_map [H*W, C]`` at precomputed taps, giving ``[..., C]``."""
    return np.einsum("...t,...tc->...c", weights, flat_map[indices])


def bilinear_scatter(grad: Tensor, indices: Tensor, weights: Tensor, size: int) -> Tensor:
    """
    Adjoint of ``bilinear_gather``: accumulate ``grad [..., C]`` into a ``[size, C]`` map.

    Taps shared by several samples accumulate in a fixed order.
    """
    channels = grad.shape[-1]
    out = np.zeros((size, channels))
    contributions = weights[..., None] * grad[..., None, :]
    np.add.at(out, indices.reshape(-1), contributions.reshape(-1, channels))
    return out
