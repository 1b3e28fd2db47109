"""Ray-relative coordinate frames.

Each target ray gets a frame in which it starts at the origin and points
along +z. The frame's y-axis is the camera's y-axis made orthogonal to the
ray, so the frame still carries the camera's roll.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateGeometryError
from ..geometry import CameraPose, RayBundle
from ..tensor import BoolTensor, Tensor, as_tensor
from ..utils.logger import get_logger

logger = get_logger(__name__)

PARALLEL_TOLERANCE = 1e-9


@dataclass(frozen=True)
class CanonicalFrame:
    """
    Rotation ``R_c`` (columns are the frame axes in world coordinates) anchored at ``center``.

    World points map into the frame by ``R_cᵀ (x - center)``.
    """

    rotation: Tensor
    center: Tensor
    used_fallback: bool = False

    @property
    def transform(self) -> Tensor:
        """The 3x4 map ``[R_cᵀ | -R_cᵀ center]``."""
        rt = self.rotation.T
        return np.concatenate([rt, (-rt @ self.center)[:, None]], axis=1)

    def apply_points(self, points: Tensor) -> Tensor:
        return (as_tensor(points) - self.center) @ self.rotation

    def apply_directions(self, directions: Tensor) -> Tensor:
        mapped = as_tensor(directions) @ self.rotation
        return mapped / np.linalg.norm(mapped, axis=-1, keepdims=True)

    def restore(self, rays: RayBundle) -> RayBundle:
        """Map canonical rays back to world coordinates."""
        origins = rays.origins @ self.rotation.T + self.center
        directions = rays.directions @ self.rotation.T
        return RayBundle(origins, directions / np.linalg.norm(directions, axis=-1, keepdims=True))


def _frame_rotations(pose: CameraPose, directions: Tensor) -> tuple[Tensor, BoolTensor]:
    norms = np.linalg.norm(directions, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegenerateGeometryError("Cannot build a ray frame for a zero direction")
    v = directions / norms

    y = np.broadcast_to(pose.rotation[1], v.shape)
    y_perp = y - np.sum(y * v, axis=-1, keepdims=True) * v
    y_norm = np.linalg.norm(y_perp, axis=-1)
    fallback = y_norm < PARALLEL_TOLERANCE
    if fallback.any():
        logger.warning(f"{int(fallback.sum())} ray(s) parallel to the camera y-axis, using x-axis")
        x = np.broadcast_to(pose.rotation[0], v.shape)
        x_perp = x - np.sum(x * v, axis=-1, keepdims=True) * v
        y_perp = np.where(fallback[..., None], x_perp, y_perp)
        y_norm = np.linalg.norm(y_perp, axis=-1)
    y_hat = y_perp / y_norm[..., None]

    rotations = np.stack([np.cross(y_hat, v), y_hat, v], axis=-1)
    return rotations, fallback


def canonical_transform(pose: CameraPose, ray_direction: Tensor) -> CanonicalFrame:
    """
    Frame of the ray leaving ``pose``'s camera centre along ``ray_direction``.

    Raises:
        DegenerateGeometryError: If ``ray_direction`` is zero
    """
    rotations, fallback = _frame_rotations(pose, as_tensor(ray_direction).reshape(1, 3))
    return CanonicalFrame(rotations[0], pose.center, bool(fallback[0]))


def canonical_frames(pose: CameraPose, directions: Tensor) -> tuple[Tensor, BoolTensor]:
    """Frame rotations ``[P, 3, 3]`` and fallback flags ``[P]`` for a bundle of directions."""
    return _frame_rotations(pose, as_tensor(directions))


def canonicalize_neighbor_rays(frame: CanonicalFrame, rays: RayBundle) -> RayBundle:
    """Express ``rays`` in ``frame``; directions are rotated only and renormalised."""
    return RayBundle(frame.apply_points(rays.origins), frame.apply_directions(rays.directions))
