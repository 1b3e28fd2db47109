"""Pinhole cameras, look-at poses, relative transforms and projection.

Conventions: world is z-up; camera coordinates are x right, y down, z forward;
``CameraPose`` stores the world-to-camera map ``x_cam = R x_world + T``; pixel
``(i, j)`` covers ``[j, j+1) x [i, i+1)`` so its centre sits at ``(j+0.5, i+0.5)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, DegenerateGeometryError, ShapeError
from ..tensor import Tensor, as_tensor
from ..utils.logger import get_logger

logger = get_logger(__name__)

ROTATION_TOLERANCE = 1e-9
MIN_DEPTH = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Square-pixel pinhole intrinsics."""

    width: int
    height: int
    fov_y: float  # radians
    cx: float | None = None
    cy: float | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigurationError(f"Image size must be >= 1, got {self.width}x{self.height}")
        if not 0.0 < self.fov_y < math.pi:
            raise ConfigurationError(f"fov_y must be in (0, pi), got {self.fov_y}")
        if self.cx is None:
            object.__setattr__(self, "cx", self.width / 2.0)
        if self.cy is None:
            object.__setattr__(self, "cy", self.height / 2.0)

    @classmethod
    def from_fov_deg(cls, width: int, height: int, fov_y_deg: float = 40.0) -> "CameraIntrinsics":
        """Intrinsics with the principal point at the image centre."""
        return cls(width=width, height=height, fov_y=math.radians(fov_y_deg))

    @property
    def focal(self) -> float:
        """Focal length in pixels, ``(height / 2) / tan(fov_y / 2)``."""
        return (self.height / 2.0) / math.tan(self.fov_y / 2.0)

    @property
    def matrix(self) -> Tensor:
        """The 3x3 calibration matrix K."""
        f = self.focal
        return np.array([[f, 0.0, self.cx], [0.0, f, self.cy], [0.0, 0.0, 1.0]])

    def scaled(self, width: int, height: int) -> "CameraIntrinsics":
        """
        Intrinsics for the same camera sampled on a uniformly rescaled pixel grid.

        Raises:
            ConfigurationError: If the rescale is not uniform in x and y
        """
        if width == self.width and height == self.height:
            return self
        sx = width / self.width
        sy = height / self.height
        if not math.isclose(sx, sy, rel_tol=1e-12):
            raise ConfigurationError(
                f"Feature grid {width}x{height} is not a uniform rescale of "
                f"{self.width}x{self.height}"
            )
        return CameraIntrinsics(width, height, self.fov_y, self.cx * sx, self.cy * sy)

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "fov_y_deg": math.degrees(self.fov_y),
        }


def _check_rotation(rotation: Tensor) -> None:
    if rotation.shape != (3, 3):
        raise ShapeError(f"Rotation must be 3x3, got {rotation.shape}")
    orthogonality = np.max(np.abs(rotation.T @ rotation - np.eye(3)))
    determinant = np.linalg.det(rotation)
    if orthogonality > ROTATION_TOLERANCE or abs(determinant - 1.0) > ROTATION_TOLERANCE:
        raise DegenerateGeometryError(
            f"Not a proper rotation (|RᵀR - I| = {orthogonality:.3g}, det = {determinant:.12g})"
        )


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera rigid transform ``x_cam = rotation @ x_world + translation``."""

    rotation: Tensor = field(default_factory=lambda: np.eye(3))
    translation: Tensor = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rotation = as_tensor(self.rotation)
        translation = as_tensor(self.translation).reshape(-1)
        _check_rotation(rotation)
        if translation.shape != (3,):
            raise ShapeError(f"Translation must have 3 entries, got {translation.shape}")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls()

    @property
    def center(self) -> Tensor:
        """Camera centre in world coordinates, ``-Rᵀ T``."""
        return -self.rotation.T @ self.translation

    def inverse(self) -> "CameraPose":
        """The camera-to-world transform as a pose."""
        return CameraPose(self.rotation.T, -self.rotation.T @ self.translation)

    def compose(self, first: "CameraPose") -> "CameraPose":
        """The transform that applies ``first`` and then ``self``."""
        return CameraPose(
            self.rotation @ first.rotation,
            self.rotation @ first.translation + self.translation,
        )

    def apply(self, points: Tensor) -> Tensor:
        """Map world points ``[..., 3]`` into camera coordinates."""
        return points @ self.rotation.T + self.translation

    def to_dict(self) -> dict:
        return {
            "rotation": [float(v) for v in self.rotation.reshape(-1)],
            "translation": [float(v) for v in self.translation],
        }


def make_lookat_pose(
    position: Tensor,
    target: Tensor = (0.0, 0.0, 0.0),
    up_hint: Tensor = (0.0, 0.0, 1.0),
) -> CameraPose:
    """
    Camera at ``position`` whose principal axis points at ``target``.

    If ``up_hint`` is parallel to the viewing direction the hint falls back to
    the world x-axis (and to the z-axis if that is parallel too).

    Raises:
        DegenerateGeometryError: If ``position`` equals ``target``
    """
    position = as_tensor(position).reshape(3)
    target = as_tensor(target).reshape(3)
    offset = target - position
    distance = np.linalg.norm(offset)
    if distance < MIN_DEPTH:
        raise DegenerateGeometryError(f"Camera position equals target {target.tolist()}")
    forward = offset / distance

    right = None
    hints = (as_tensor(up_hint).reshape(3), np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]))
    for hint in hints:
        candidate = np.cross(forward, hint)
        norm = np.linalg.norm(candidate)
        if norm > 1e-9:
            right = candidate / norm
            break
        logger.debug(f"Up hint {hint.tolist()} parallel to view direction, falling back")
    assert right is not None  # the two fallbacks are orthogonal, one always works
    down = np.cross(forward, right)

    rotation = np.stack([right, down, forward])
    return CameraPose(rotation, -rotation @ position)


def relative_transform(a: CameraPose, b: CameraPose) -> CameraPose:
    """Pose mapping camera-``a`` coordinates to camera-``b`` coordinates."""
    return b.compose(a.inverse())


@dataclass(frozen=True)
class Projection:
    """Result of projecting one point."""

    u: float
    v: float
    depth: float  # camera-space z
    valid: bool


def project_points(
    intrinsics: CameraIntrinsics, pose: CameraPose, points: Tensor
) -> tuple[Tensor, Tensor, Tensor]:
    """
    Project world points ``[..., 3]``.

    Returns:
        Tuple of (pixels [..., 2], camera-z depth [...], in-front flag [...]).
        Pixels of points behind the camera are set to NaN.
    """
    cam = pose.apply(as_tensor(points))
    depth = cam[..., 2]
    in_front = depth > MIN_DEPTH
    safe_depth = np.where(in_front, depth, 1.0)
    f = intrinsics.focal
    u = np.where(in_front, f * cam[..., 0] / safe_depth + intrinsics.cx, np.nan)
    v = np.where(in_front, f * cam[..., 1] / safe_depth + intrinsics.cy, np.nan)
    return np.stack([u, v], axis=-1), depth, in_front


def project_point(intrinsics: CameraIntrinsics, pose: CameraPose, point: Tensor) -> Projection:
    """Project a single world point; points behind the camera come back ``valid=False``."""
    pixels, depth, in_front = project_points(intrinsics, pose, as_tensor(point).reshape(1, 3))
    return Projection(
        u=float(pixels[0, 0]),
        v=float(pixels[0, 1]),
        depth=float(depth[0]),
        valid=bool(in_front[0]),
    )


def pixel_directions(intrinsics: CameraIntrinsics, pose: CameraPose, pixels: Tensor) -> Tensor:
    """Unit world-space directions of the rays through ``pixels [..., 2]``."""
    pixels = as_tensor(pixels)
    f = intrinsics.focal
    cam = np.stack(
        [
            (pixels[..., 0] - intrinsics.cx) / f,
            (pixels[..., 1] - intrinsics.cy) / f,
            np.ones(pixels.shape[:-1]),
        ],
        axis=-1,
    )
    world = cam @ pose.rotation
    return world / np.linalg.norm(world, axis=-1, keepdims=True)


def unproject_point(
    intrinsics: CameraIntrinsics, pose: CameraPose, u: float, v: float, depth: float
) -> Tensor:
    """World point seen at pixel ``(u, v)`` with camera-z ``depth``."""
    f = intrinsics.focal
    cam = np.array([(u - intrinsics.cx) / f * depth, (v - intrinsics.cy) / f * depth, depth])
    return pose.rotation.T @ (cam - pose.translation)
