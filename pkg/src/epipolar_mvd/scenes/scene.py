"""Analytic scenes and an exact raycaster.

Depth is the distance along the unit view ray to the first hit (0 for a miss),
misses are white and colour is albedo unless shading is switched on.
"""

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from ..errors import ConfigurationError
from ..geometry import CameraIntrinsics, CameraPose, pixel_directions
from ..sampling import patch_centers
from ..tensor import BoolTensor, DeterministicRng, Tensor, as_tensor
from ..utils.logger import get_logger

logger = get_logger(__name__)

BACKGROUND = np.ones(3)
LIGHT_DIRECTION = np.array([0.3, 0.5, 0.8]) / math.sqrt(0.3**2 + 0.5**2 + 0.8**2)
AMBIENT = 0.3

SceneKind = Literal["sphere", "voxel"]


@dataclass(frozen=True)
class SyntheticScene:
    """
    A textured sphere or an axis-aligned voxel grid, contained in the unit sphere.

    Sphere texture: ``0.5 + amplitude * sin(frequency * (axis_c . n) + phase_c)`` per
    colour channel ``c`` over the unit surface normal ``n``.
    """

    kind: SceneKind = "sphere"
    center: Tensor = field(default_factory=lambda: np.zeros(3))
    radius: float = 0.5
    texture_frequency: float = 2.0
    texture_amplitude: float = 0.35
    texture_phase: tuple[float, float, float] = (0.0, 2.0, 4.0)
    occupancy: BoolTensor | None = None  # [G, G, G], indexed x, y, z
    voxel_colors: Tensor | None = None  # [G, G, G, 3]
    half_size: float = 0.55

    def __post_init__(self):
        object.__setattr__(self, "center", as_tensor(self.center).reshape(3))
        if self.kind == "sphere":
            if self.radius <= 0:
                raise ConfigurationError(f"Sphere radius must be > 0, got {self.radius}")
            if np.linalg.norm(self.center) + self.radius > 1.0 + 1e-12:
                raise ConfigurationError("Sphere must fit inside the unit sphere")
        elif self.kind == "voxel":
            if self.occupancy is None or self.voxel_colors is None:
                raise ConfigurationError("Voxel scenes need occupancy and colours")
            grid = self.occupancy.shape
            if len(grid) != 3 or self.voxel_colors.shape != grid + (3,):
                raise ConfigurationError(
                    f"Occupancy {grid} and colours {self.voxel_colors.shape} disagree"
                )
            if self.half_size * math.sqrt(3.0) > 1.0:
                raise ConfigurationError("Voxel grid must fit inside the unit sphere")
        else:
            raise ConfigurationError(f"Unknown scene kind {self.kind!r}")

    @classmethod
    def sphere(cls, radius: float = 0.5, phase_shift: float = 0.0, **kwargs) -> "SyntheticScene":
        base = (0.0, 2.0, 4.0)
        return cls(
            kind="sphere",
            radius=radius,
            texture_phase=tuple(p + phase_shift for p in base),  # type: ignore[arg-type]
            **kwargs,
        )

    @classmethod
    def voxel_blob(cls, grid: int = 8, seed: int = 0, half_size: float = 0.55) -> "SyntheticScene":
        """A roughly spherical blob of randomly coloured voxels."""
        rng = DeterministicRng(seed, stream=7)
        coords = (np.arange(grid) + 0.5) / grid * 2.0 - 1.0
        x, y, z = np.meshgrid(coords, coords, coords, indexing="ij")
        occupancy = x**2 + y**2 + z**2 <= 0.8
        colors = rng.uniform((grid, grid, grid, 3), 0.1, 0.9)
        return cls(kind="voxel", occupancy=occupancy, voxel_colors=colors, half_size=half_size)

    def first_hit(self, origins: Tensor, directions: Tensor) -> tuple[Tensor, BoolTensor]:
        """Distance to the first surface along unit rays ``[P, 3]`` (0 on a miss) and hit flags."""
        if self.kind == "sphere":
            depth, hit, _ = _intersect_sphere(self, origins, directions)
        else:
            depth, hit, _, _ = _intersect_voxels(self, origins, directions)
        return depth, hit

    def albedo(self, normals: Tensor) -> Tensor:
        """Sphere texture at unit normals ``[..., 3]``."""
        axes = np.array([[1.0, 0.3, 0.2], [0.2, 1.0, -0.4], [-0.3, 0.4, 1.0]])
        axes = axes / np.linalg.norm(axes, axis=1, keepdims=True)
        phase = np.array(self.texture_phase)
        return 0.5 + self.texture_amplitude * np.sin(
            self.texture_frequency * (normals @ axes.T) + phase
        )


def _shade(albedo: Tensor, normals: Tensor) -> Tensor:
    lambert = np.clip(normals @ LIGHT_DIRECTION, 0.0, None)
    return albedo * (AMBIENT + (1.0 - AMBIENT) * lambert[..., None])


def _intersect_sphere(
    scene: SyntheticScene, origins: Tensor, directions: Tensor
) -> tuple[Tensor, BoolTensor, Tensor]:
    offset = origins - scene.center
    b = np.sum(offset * directions, axis=-1)
    c = np.sum(offset * offset, axis=-1) - scene.radius**2
    disc = b * b - c
    hit = disc >= 0.0
    root = np.sqrt(np.where(hit, disc, 0.0))
    t_near = -b - root
    t_far = -b + root
    t = np.where(t_near > 0.0, t_near, t_far)
    hit &= t > 0.0
    points = origins + t[..., None] * directions
    normals = (points - scene.center) / scene.radius
    return np.where(hit, t, 0.0), hit, normals


def _intersect_voxels(
    scene: SyntheticScene, origins: Tensor, directions: Tensor
) -> tuple[Tensor, BoolTensor, Tensor, Tensor]:
    """Amanatides-Woo traversal of every ray at once."""
    assert scene.occupancy is not None and scene.voxel_colors is not None
    grid = np.array(scene.occupancy.shape)
    lower = -scene.half_size
    voxel = 2.0 * scene.half_size / grid

    with np.errstate(divide="ignore", invalid="ignore"):
        inverse = 1.0 / directions
        t0 = (lower - origins) * inverse
        t1 = (scene.half_size - origins) * inverse
    t_min = np.where(np.isnan(t0), -np.inf, np.minimum(t0, t1))
    t_max = np.where(np.isnan(t1), np.inf, np.maximum(t0, t1))
    entry_axis = np.argmax(t_min, axis=-1)
    t_enter = np.maximum(np.max(t_min, axis=-1), 0.0)
    t_exit = np.min(t_max, axis=-1)
    active = t_enter < t_exit

    start = origins + (t_enter + 1e-9)[..., None] * directions
    index = np.clip(np.floor((start - lower) / voxel), 0, grid - 1).astype(np.int64)
    step = np.where(directions >= 0.0, 1, -1)
    next_boundary = lower + (index + (step > 0)) * voxel
    with np.errstate(divide="ignore", invalid="ignore"):
        t_next = np.where(directions != 0.0, (next_boundary - origins) / directions, np.inf)
        t_delta = np.where(directions != 0.0, voxel / np.abs(directions), np.inf)

    count = origins.shape[0]
    depth = np.zeros(count)
    hit = np.zeros(count, dtype=bool)
    colors = np.zeros((count, 3))
    normals = np.zeros((count, 3))
    t_current = t_enter.copy()
    last_axis = entry_axis.copy()

    for _ in range(int(grid.sum()) + 3):
        if not active.any():
            break
        rows = np.nonzero(active)[0]
        ix, iy, iz = index[rows].T
        occupied = scene.occupancy[ix, iy, iz]
        found = rows[occupied]
        depth[found] = t_current[found]
        hit[found] = True
        colors[found] = scene.voxel_colors[ix[occupied], iy[occupied], iz[occupied]]
        normals[found, last_axis[found]] = -step[found, last_axis[found]]
        active[found] = False

        moving = rows[~occupied]
        axis = np.argmin(t_next[moving], axis=-1)
        t_current[moving] = t_next[moving, axis]
        index[moving, axis] += step[moving, axis]
        t_next[moving, axis] += t_delta[moving, axis]
        last_axis[moving] = axis
        outside = (index[moving, axis] < 0) | (index[moving, axis] >= grid[axis])
        active[moving[outside]] = False

    return depth, hit, colors, normals


def raycast_render(
    scene: SyntheticScene,
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    height: int | None = None,
    width: int | None = None,
    shading: bool = False,
) -> tuple[Tensor, Tensor]:
    """
    Render ``scene`` through one camera.

    Args:
        scene: Scene to render
        intrinsics: Camera intrinsics; rescaled when ``height``/``width`` differ
        pose: Camera pose
        height: Output rows (defaults to the intrinsics' height)
        width: Output columns (defaults to the intrinsics' width)
        shading: Apply Lambertian shading under a fixed light instead of pure albedo

    Returns:
        Tuple of (rgb [H, W, 3] in [0, 1], depth [H, W] with 0 for misses)
    """
    height = height or intrinsics.height
    width = width or intrinsics.width
    intrinsics = intrinsics.scaled(width, height)
    centers = patch_centers(height, width, height, width)
    directions = pixel_directions(intrinsics, pose, centers)
    origins = np.broadcast_to(pose.center, directions.shape)

    if scene.kind == "sphere":
        depth, hit, normals = _intersect_sphere(scene, origins, directions)
        albedo = scene.albedo(normals)
    else:
        depth, hit, albedo, normals = _intersect_voxels(scene, origins, directions)

    logger.debug(f"Raycast {scene.kind} {height}x{width}: {int(hit.sum())} pixels hit")
    color = _shade(albedo, normals) if shading else albedo
    rgb = np.where(hit[:, None], np.clip(color, 0.0, 1.0), BACKGROUND)
    return rgb.reshape(height, width, 3), depth.reshape(height, width)
