"""Cameras, view layouts and epipolar geometry."""

from .camera import (
    CameraIntrinsics,
    CameraPose,
    Projection,
    make_lookat_pose,
    pixel_directions,
    project_point,
    project_points,
    relative_transform,
    unproject_point,
)
from .epipolar import FundamentalMatrix, epipole, fundamental_matrix, homogeneous, skew
from .layout import (
    CameraView,
    ViewLayout,
    generate_layout,
    read_layout_json,
    sample_training_views,
    select_nearest_views,
    spherical_position,
    subset_layout,
    uniform_elevation_layout,
    write_layout_json,
)
from .rays import Ray, RayBundle

__all__ = [
    "CameraIntrinsics",
    "CameraPose",
    "CameraView",
    "FundamentalMatrix",
    "Projection",
    "Ray",
    "RayBundle",
    "ViewLayout",
    "epipole",
    "fundamental_matrix",
    "generate_layout",
    "homogeneous",
    "make_lookat_pose",
    "pixel_directions",
    "project_point",
    "project_points",
    "read_layout_json",
    "relative_transform",
    "sample_training_views",
    "select_nearest_views",
    "skew",
    "spherical_position",
    "subset_layout",
    "uniform_elevation_layout",
    "unproject_point",
    "write_layout_json",
]
