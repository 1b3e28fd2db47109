"""Two-view epipolar geometry."""

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateGeometryError
from ..tensor import Tensor, as_tensor
from .camera import CameraIntrinsics, CameraPose, relative_transform

MIN_BASELINE = 1e-9

Camera = tuple[CameraIntrinsics, CameraPose]


def skew(t: Tensor) -> Tensor:
    """Cross-product matrix ``[t]x`` with ``[t]x @ a == cross(t, a)``."""
    x, y, z = t
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def homogeneous(pixels: Tensor) -> Tensor:
    """Append a 1 to pixel coordinates ``[..., 2]``."""
    pixels = as_tensor(pixels)
    return np.concatenate([pixels, np.ones(pixels.shape[:-1] + (1,))], axis=-1)


@dataclass(frozen=True)
class FundamentalMatrix:
    """Rank-2 matrix with ``p2ᵀ F p1 = 0`` for corresponding pixels, unit Frobenius norm."""

    matrix: Tensor

    @property
    def singular_ratio(self) -> float:
        s = np.linalg.svd(self.matrix, compute_uv=False)
        return float(s[-1] / s[0])

    def residual(self, p1: Tensor, p2: Tensor) -> Tensor:
        """``p2ᵀ F p1`` for pixel pairs ``[..., 2]``."""
        h1 = homogeneous(p1)
        h2 = homogeneous(p2)
        return np.einsum("...i,ij,...j->...", h2, self.matrix, h1)

    def epipolar_line(self, p1: Tensor) -> Tensor:
        """
        Line ``(a, b, c)`` in image 2 on which the match of pixel ``p1`` lies.

        Normalised so that ``a² + b² = 1``, making ``l · (u, v, 1)`` a signed pixel distance.
        """
        line = homogeneous(p1) @ self.matrix.T
        return line / np.linalg.norm(line[..., :2], axis=-1, keepdims=True)

    def epipoles(self) -> tuple[Tensor, Tensor]:
        """
        Epipoles ``(e1, e2)`` as unit homogeneous vectors with ``F e1 = 0`` and ``Fᵀ e2 = 0``.

        ``e1`` is the image of camera 2's centre in camera 1, ``e2`` the reverse.
        """
        u, _, vt = np.linalg.svd(self.matrix)
        return vt[-1], u[:, -1]


def fundamental_matrix(cam1: Camera, cam2: Camera) -> FundamentalMatrix:
    """
    ``F = K2⁻ᵀ [t]x R K1⁻¹`` for the relative motion ``(R, t)`` from camera 1 to camera 2.

    Raises:
        DegenerateGeometryError: If the camera centres coincide
    """
    intr1, pose1 = cam1
    intr2, pose2 = cam2
    baseline = np.linalg.norm(pose1.center - pose2.center)
    if baseline < MIN_BASELINE:
        raise DegenerateGeometryError(f"Camera centres coincide (baseline {baseline:.3g})")

    rel = relative_transform(pose1, pose2)
    essential = skew(rel.translation) @ rel.rotation
    f = np.linalg.inv(intr2.matrix).T @ essential @ np.linalg.inv(intr1.matrix)
    return FundamentalMatrix(f / np.linalg.norm(f))


def epipole(cam1: Camera, cam2: Camera) -> Tensor:
    """
    Pixel where camera 2's centre projects in camera 1, as homogeneous ``(u, v, 1)``.

    A centre on camera 1's focal plane gives a point at infinity, returned as a unit vector.
    """
    intr1, pose1 = cam1
    point = pose1.apply(cam2[1].center)
    h = intr1.matrix @ point
    if abs(h[2]) < 1e-12:
        return h / np.linalg.norm(h)
    return h / h[2]
