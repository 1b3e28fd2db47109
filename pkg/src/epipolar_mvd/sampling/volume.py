"""Target rays, depth samples and the epipolar feature volume."""

import json
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..encoding import neighbor_ray_plucker
from ..errors import ConfigurationError, SampleRangeError, ShapeError
from ..geometry import (
    CameraIntrinsics,
    CameraPose,
    Ray,
    RayBundle,
    ViewLayout,
    pixel_directions,
    project_points,
    select_nearest_views,
)
from ..tensor import BoolTensor, Tensor, as_tensor, tensor_read, tensor_write
from ..utils.logger import get_logger
from .bilinear import bilinear_gather, bilinear_scatter, bilinear_taps, in_bounds

logger = get_logger(__name__)

DEFAULT_NEAR_FAR_MARGIN = 1.0


def patch_centers(height: int, width: int, feat_h: int, feat_w: int) -> Tensor:
    """Image-pixel centres ``[feat_h * feat_w, 2]`` of the feature-grid patches, row-major."""
    rows, cols = np.meshgrid(np.arange(feat_h), np.arange(feat_w), indexing="ij")
    u = (cols.reshape(-1) + 0.5) * width / feat_w
    v = (rows.reshape(-1) + 0.5) * height / feat_h
    return np.stack([u, v], axis=-1)


def rays_from_feature_map(
    intrinsics: CameraIntrinsics, pose: CameraPose, feat_h: int, feat_w: int
) -> RayBundle:
    """One ray per feature-map patch, from the camera centre through the patch centre."""
    if feat_h < 1 or feat_w < 1:
        raise ConfigurationError(f"Feature map must be at least 1x1, got {feat_h}x{feat_w}")
    centers = patch_centers(intrinsics.height, intrinsics.width, feat_h, feat_w)
    directions = pixel_directions(intrinsics, pose, centers)
    origins = np.broadcast_to(pose.center, directions.shape)
    return RayBundle(origins, directions)


def sample_depths(near: float, far: float, samples: int) -> Tensor:
    """Centres of ``samples`` equal bins between ``near`` and ``far``."""
    if not 0.0 < near < far:
        raise ConfigurationError(f"Need 0 < near < far, got near={near}, far={far}")
    if samples < 1:
        raise ConfigurationError(f"S must be >= 1, got {samples}")
    return near + (np.arange(samples) + 0.5) * (far - near) / samples


def default_near_far(
    pose: CameraPose, margin: float = DEFAULT_NEAR_FAR_MARGIN
) -> tuple[float, float]:
    """``|camera centre| -/+ margin``: the bounds of a unit sphere at the origin."""
    distance = float(np.linalg.norm(pose.center))
    return distance - margin, distance + margin


def reproject_samples(
    ray: Ray,
    depths: Tensor,
    ref_intrinsics: CameraIntrinsics,
    ref_pose: CameraPose,
) -> tuple[Tensor, BoolTensor]:
    """
    Project the points ``origin + depth * direction`` into a reference camera.

    Returns:
        Tuple of (pixels [S, 2], valid [S]); a sample is invalid behind the
        camera or outside ``[0, W) x [0, H)``
    """
    points = ray.origin + as_tensor(depths)[:, None] * ray.direction
    pixels, _, in_front = project_points(ref_intrinsics, ref_pose, points)
    height, width = ref_intrinsics.height, ref_intrinsics.width
    inside = in_bounds(np.nan_to_num(pixels, nan=-1.0), height, width)
    valid = in_front & inside
    return pixels, valid


@dataclass(frozen=True)
class SampleGeometry:
    """
    Feature-independent part of a sample volume for one target view.

    Everything here depends only on the cameras, the feature-grid size and the
    sampling settings, so it can be built once and reused across steps.
    """

    target_index: int
    view_indices: tuple[int, ...]
    height: int
    width: int
    near: float
    far: float
    depths: Tensor  # [P, S]
    pixels: Tensor  # [K, P, S, 2], NaN behind the camera
    valid: BoolTensor  # [K, P, S]
    tap_indices: Tensor  # [K, P, S, 4]
    tap_weights: Tensor  # [K, P, S, 4], zero on invalid samples
    plucker: Tensor  # [K, P, S, 6]
    ray_directions: Tensor  # [P, 3]

    @property
    def k(self) -> int:
        return len(self.view_indices)

    @property
    def samples(self) -> int:
        return self.depths.shape[1]

    @property
    def pixel_count(self) -> int:
        return self.height * self.width


def build_sample_geometry(
    layout: ViewLayout,
    target_index: int,
    feat_h: int,
    feat_w: int,
    k: int,
    samples: int,
    near: float | None = None,
    far: float | None = None,
    ray_relative: bool = True,
) -> SampleGeometry:
    """
    Select the ``k`` nearest views, cast one ray per target patch, sample depths
    and project every sample into every selected view's feature grid.

    Raises:
        SampleRangeError: If ``target_index`` is out of range
        ConfigurationError: If ``k``, ``samples`` or the depth range is invalid
    """
    view_indices = select_nearest_views(layout, target_index, k)
    target = layout[target_index]
    if near is None or far is None:
        default_near, default_far = default_near_far(target.pose)
        near = default_near if near is None else near
        far = default_far if far is None else far
    depth_row = sample_depths(near, far, samples)

    intrinsics = target.intrinsics.scaled(feat_w, feat_h)
    rays = rays_from_feature_map(intrinsics, target.pose, feat_h, feat_w)
    points = rays.points_at(depth_row)

    pixels = []
    valid = []
    for view_index in view_indices:
        view = layout[view_index]
        view_intrinsics = view.intrinsics.scaled(feat_w, feat_h)
        view_pixels, _, in_front = project_points(view_intrinsics, view.pose, points)
        inside = in_bounds(np.nan_to_num(view_pixels, nan=-1.0), feat_h, feat_w)
        pixels.append(view_pixels)
        valid.append(in_front & inside)
    pixels_arr = np.stack(pixels)
    valid_arr = np.stack(valid)

    safe_pixels = np.where(valid_arr[..., None], pixels_arr, 0.5)
    tap_indices, tap_weights = bilinear_taps(safe_pixels, feat_h, feat_w)
    tap_weights = np.where(valid_arr[..., None], tap_weights, 0.0)

    centers = np.stack([layout[i].center for i in view_indices])
    plucker = neighbor_ray_plucker(
        target.pose, rays.directions, centers, points, ray_relative=ray_relative
    )

    logger.debug(
        f"Sample geometry for view {target_index}: K={k} S={samples} grid {feat_h}x{feat_w}, "
        f"{int(valid_arr.sum())}/{valid_arr.size} samples valid"
    )
    return SampleGeometry(
        target_index=target_index,
        view_indices=tuple(view_indices),
        height=feat_h,
        width=feat_w,
        near=float(near),
        far=float(far),
        depths=np.broadcast_to(depth_row, (feat_h * feat_w, samples)).copy(),
        pixels=pixels_arr,
        valid=valid_arr,
        tap_indices=tap_indices,
        tap_weights=tap_weights,
        plucker=plucker,
        ray_directions=rays.directions,
    )


def _check_maps(feature_maps: Sequence[Tensor], geometry: SampleGeometry) -> int:
    shapes = {tuple(m.shape) for m in feature_maps}
    if len(shapes) != 1:
        raise ShapeError(f"Feature maps differ in shape: {sorted(shapes)}")
    shape = shapes.pop()
    if len(shape) != 3 or shape[:2] != (geometry.height, geometry.width):
        raise ShapeError(
            f"Feature maps {shape} do not match the {geometry.height}x{geometry.width} sample grid"
        )
    if max(geometry.view_indices) >= len(feature_maps):
        raise SampleRangeError(
            f"Geometry references view {max(geometry.view_indices)} "
            f"but only {len(feature_maps)} maps were given"
        )
    return shape[2]


def gather_sample_features(geometry: SampleGeometry, feature_maps: Sequence[Tensor]) -> Tensor:
    """Features ``[K, P, S, C]`` at every sample; invalid samples are exactly zero."""
    channels = _check_maps(feature_maps, geometry)
    features = np.empty(geometry.valid.shape + (channels,))
    for slot, view_index in enumerate(geometry.view_indices):
        flat = feature_maps[view_index].reshape(geometry.pixel_count, channels)
        features[slot] = bilinear_gather(
            flat, geometry.tap_indices[slot], geometry.tap_weights[slot]
        )
    return np.where(geometry.valid[..., None], features, 0.0)


def scatter_sample_grads(
    geometry: SampleGeometry, grad_features: Tensor, view_count: int
) -> list[Tensor]:
    """Adjoint of ``gather_sample_features``: one ``[H, W, C]`` gradient per input map."""
    channels = grad_features.shape[-1]
    shape = (geometry.height, geometry.width, channels)
    grads = [np.zeros(shape) for _ in range(view_count)]
    for slot, view_index in enumerate(geometry.view_indices):
        grads[view_index] = bilinear_scatter(
            grad_features[slot],
            geometry.tap_indices[slot],
            geometry.tap_weights[slot],
            geometry.pixel_count,
        ).reshape(shape)
    return grads


@dataclass
class EpipolarSampleMap:
    """Features gathered at S depths along every target ray from K views."""

    features: Tensor  # [K, P, S, C]
    valid: BoolTensor  # [K, P, S]
    depths: Tensor  # [P, S]
    view_indices: tuple[int, ...]
    target_index: int
    near: float
    far: float

    @property
    def target_samples(self) -> Tensor:
        return self.features[0]

    @property
    def reference_samples(self) -> Tensor:
        return self.features[1:]

    def sidecar(self) -> dict:
        return {
            "view_indices": list(self.view_indices),
            "target_index": self.target_index,
            "near": self.near,
            "far": self.far,
            "K": len(self.view_indices),
            "S": int(self.depths.shape[1]),
        }


def build_sample_volume(
    target_index: int,
    layout: ViewLayout,
    feature_maps: Sequence[Tensor],
    k: int,
    samples: int,
    near: float | None = None,
    far: float | None = None,
) -> EpipolarSampleMap:
    """Sample the feature maps of the ``k`` views nearest ``target_index`` along its rays."""
    if not feature_maps:
        raise ShapeError("build_sample_volume needs at least one feature map")
    if len(feature_maps) != len(layout):
        raise ShapeError(f"{len(feature_maps)} feature maps for a {len(layout)}-view layout")
    height, width = feature_maps[0].shape[:2]
    geometry = build_sample_geometry(layout, target_index, height, width, k, samples, near, far)
    return EpipolarSampleMap(
        features=gather_sample_features(geometry, feature_maps),
        valid=geometry.valid,
        depths=geometry.depths,
        view_indices=geometry.view_indices,
        target_index=target_index,
        near=geometry.near,
        far=geometry.far,
    )


def save_sample_map(sample_map: EpipolarSampleMap, directory: Path | str) -> None:
    """Write the four tensors as ``.etz`` files plus a ``sample_map.json`` sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensor_write(sample_map.features, directory / "features.etz")
    tensor_write(sample_map.valid.astype(np.float64), directory / "valid.etz")
    tensor_write(sample_map.depths, directory / "depths.etz")
    indices = np.array(sample_map.view_indices, dtype=np.float64)
    tensor_write(indices, directory / "view_indices.etz")
    (directory / "sample_map.json").write_text(json.dumps(sample_map.sidecar(), indent=2))
    logger.info(f"Saved sample map {sample_map.features.shape} to {directory}")


def load_sample_map(directory: Path | str) -> EpipolarSampleMap:
    """Read a directory written by ``save_sample_map``."""
    directory = Path(directory)
    sidecar = json.loads((directory / "sample_map.json").read_text())
    return EpipolarSampleMap(
        features=tensor_read(directory / "features.etz"),
        valid=tensor_read(directory / "valid.etz") > 0.5,
        depths=tensor_read(directory / "depths.etz"),
        view_indices=tuple(int(i) for i in tensor_read(directory / "view_indices.etz")),
        target_index=int(sidecar["target_index"]),
        near=float(sidecar["near"]),
        far=float(sidecar["far"]),
    )
