"""Spherical view layouts and nearest-view selection."""

import hashlib
import json
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from ..config import TRAINING_ELEVATIONS_DEG
from ..errors import ConfigurationError, DegenerateGeometryError, SampleRangeError
from ..tensor import DeterministicRng, Tensor
from ..utils.logger import get_logger
from .camera import CameraIntrinsics, CameraPose, make_lookat_pose

logger = get_logger(__name__)

LOOKAT_TOLERANCE = 1e-9
ANGLE_DECIMALS = 12


@dataclass(frozen=True)
class CameraView:
    """One camera of a layout together with its spherical placement."""

    index: int
    intrinsics: CameraIntrinsics
    pose: CameraPose
    elevation_deg: float
    azimuth_deg: float
    radius: float

    @property
    def camera(self) -> tuple[CameraIntrinsics, CameraPose]:
        return self.intrinsics, self.pose

    @property
    def center(self) -> Tensor:
        return self.pose.center

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "elevation_deg": self.elevation_deg,
            "azimuth_deg": self.azimuth_deg,
            "radius": self.radius,
            **self.pose.to_dict(),
            **self.intrinsics.to_dict(),
        }


def _check_lookat(view: CameraView) -> None:
    # origin in camera coordinates is T; it must sit on the principal axis in front
    tx, ty, tz = view.pose.translation
    if math.hypot(tx, ty) > LOOKAT_TOLERANCE or tz <= 0.0:
        raise DegenerateGeometryError(f"View {view.index} does not look at the origin")


@dataclass(frozen=True)
class ViewLayout:
    """
    Ordered set of cameras around an object at the origin.

    ``source_indices`` records, for sub-layouts, which views of the parent
    layout each camera came from.
    """

    views: tuple[CameraView, ...]
    source_indices: tuple[int, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(self.views))
        seen: set[tuple[float, float]] = set()
        for position, view in enumerate(self.views):
            if view.index != position:
                raise ConfigurationError(f"View at position {position} has index {view.index}")
            key = (round(view.elevation_deg, 9), round(view.azimuth_deg % 360.0, 9))
            if key in seen:
                raise ConfigurationError(f"Duplicate (elevation, azimuth) pair {key}")
            seen.add(key)
            _check_lookat(view)

    def __len__(self) -> int:
        return len(self.views)

    def __iter__(self) -> Iterator[CameraView]:
        return iter(self.views)

    def __getitem__(self, index: int) -> CameraView:
        if not 0 <= index < len(self.views):
            raise SampleRangeError(f"View index {index} out of range for {len(self.views)} views")
        return self.views[index]

    @property
    def centers(self) -> Tensor:
        """Camera centres ``[N, 3]``."""
        return np.array([view.center for view in self.views]).reshape(-1, 3)

    def to_dict(self) -> dict:
        return {"views": [view.to_dict() for view in self.views]}

    @cached_property
    def fingerprint(self) -> str:
        """Stable hash of the camera parameters, used to key geometry caches."""
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


def spherical_position(elevation_deg: float, azimuth_deg: float, radius: float) -> Tensor:
    """Point on a z-up sphere: azimuth around z from +x, elevation above the xy-plane."""
    el = math.radians(elevation_deg)
    az = math.radians(azimuth_deg)
    return radius * np.array(
        [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
    )


def _make_view(
    index: int, elevation: float, azimuth: float, radius: float, intrinsics: CameraIntrinsics
) -> CameraView:
    pose = make_lookat_pose(spherical_position(elevation, azimuth, radius))
    return CameraView(index, intrinsics, pose, float(elevation), float(azimuth), float(radius))


def generate_layout(
    elevations_deg: Sequence[float] = TRAINING_ELEVATIONS_DEG,
    azimuth_count: int = 16,
    radius: float = 1.8,
    intrinsics: CameraIntrinsics | None = None,
) -> ViewLayout:
    """
    Build concentric camera rings, one per elevation, all looking at the origin.

    Views are ordered ring by ring; within a ring azimuths are ``360 * j / azimuth_count``.

    Raises:
        ConfigurationError: If there are no elevations, ``azimuth_count < 1`` or ``radius <= 0``
    """
    if len(elevations_deg) == 0:
        raise ConfigurationError("At least one elevation ring is required")
    if azimuth_count < 1:
        raise ConfigurationError(f"azimuth_count must be >= 1, got {azimuth_count}")
    if radius <= 0:
        raise ConfigurationError(f"radius must be > 0, got {radius}")
    intrinsics = intrinsics or CameraIntrinsics.from_fov_deg(32, 32)

    views = []
    for elevation in elevations_deg:
        for j in range(azimuth_count):
            azimuth = 360.0 * j / azimuth_count
            views.append(_make_view(len(views), elevation, azimuth, radius, intrinsics))

    logger.info(
        f"Generated layout with {len(views)} views "
        f"({len(elevations_deg)} rings x {azimuth_count} azimuths, radius {radius})"
    )
    return ViewLayout(tuple(views))


def uniform_elevation_layout(
    view_count: int,
    elevations_deg: Sequence[float] = TRAINING_ELEVATIONS_DEG,
    radius: float = 1.8,
    intrinsics: CameraIntrinsics | None = None,
) -> ViewLayout:
    """
    ``view_count`` cameras spread evenly in azimuth with elevations cycling through
    ``elevations_deg``.
    """
    if view_count < 1:
        raise ConfigurationError(f"view_count must be >= 1, got {view_count}")
    if len(elevations_deg) == 0:
        raise ConfigurationError("At least one elevation is required")
    if radius <= 0:
        raise ConfigurationError(f"radius must be > 0, got {radius}")
    intrinsics = intrinsics or CameraIntrinsics.from_fov_deg(32, 32)

    views = [
        _make_view(
            j, elevations_deg[j % len(elevations_deg)], 360.0 * j / view_count, radius, intrinsics
        )
        for j in range(view_count)
    ]
    return ViewLayout(tuple(views))


def subset_layout(layout: ViewLayout, indices: Sequence[int]) -> ViewLayout:
    """The views at ``indices``, re-indexed in the given order."""
    views = []
    for position, source in enumerate(indices):
        view = layout[source]
        views.append(
            CameraView(
                position,
                view.intrinsics,
                view.pose,
                view.elevation_deg,
                view.azimuth_deg,
                view.radius,
            )
        )
    return ViewLayout(tuple(views), source_indices=tuple(int(i) for i in indices))


def sample_training_views(layout: ViewLayout, count: int, rng: DeterministicRng) -> ViewLayout:
    """Random subset of ``count`` views, re-indexed in draw order."""
    if not 1 <= count <= len(layout):
        raise ConfigurationError(f"Cannot draw {count} views from a {len(layout)}-view layout")
    return subset_layout(layout, rng.choice(len(layout), count))


def select_nearest_views(layout: ViewLayout, target_index: int, k: int) -> list[int]:
    """
    The target view followed by its ``k - 1`` nearest neighbours.

    Distance is the great-circle angle between camera-centre directions; ties
    go to the lower view index.

    Raises:
        SampleRangeError: If ``target_index`` is not a view of ``layout``
        ConfigurationError: If ``k`` is not in ``[1, len(layout)]``
    """
    count = len(layout)
    if not 0 <= target_index < count:
        raise SampleRangeError(f"Target index {target_index} out of range for {count} views")
    if not 1 <= k <= count:
        raise ConfigurationError(f"K must be in [1, {count}], got {k}")

    directions = layout.centers / np.linalg.norm(layout.centers, axis=1, keepdims=True)
    target = directions[target_index]
    sines = np.linalg.norm(np.cross(directions, target), axis=1)
    cosines = directions @ target
    angles = np.round(np.arctan2(sines, cosines), ANGLE_DECIMALS)

    indices = np.arange(count)
    others = indices[indices != target_index]
    order = np.lexsort((others, angles[others]))
    return [target_index] + [int(i) for i in others[order][: k - 1]]


def write_layout_json(layout: ViewLayout, path: Path | str) -> None:
    """Write the camera JSON for ``layout``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(layout.to_dict(), indent=2))
    logger.debug(f"Wrote {len(layout)} cameras to {path}")


def read_layout_json(path: Path | str) -> ViewLayout:
    """
    Load a layout written by ``write_layout_json``.

    Raises:
        OSError: If the file cannot be read
        ConfigurationError: If an entry is missing fields or has malformed values
    """
    data = json.loads(Path(path).read_text())
    views = []
    try:
        for entry in data["views"]:
            intrinsics = CameraIntrinsics.from_fov_deg(
                int(entry["width"]), int(entry["height"]), float(entry["fov_y_deg"])
            )
            pose = CameraPose(
                np.array(entry["rotation"], dtype=np.float64).reshape(3, 3),
                np.array(entry["translation"], dtype=np.float64),
            )
            views.append(
                CameraView(
                    int(entry["index"]),
                    intrinsics,
                    pose,
                    float(entry["elevation_deg"]),
                    float(entry["azimuth_deg"]),
                    float(entry["radius"]),
                )
            )
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigurationError(f"Malformed camera file {path}: {e}") from e
    return ViewLayout(tuple(views))
