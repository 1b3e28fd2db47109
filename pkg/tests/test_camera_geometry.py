"""Tests for cameras, layouts and two-view geometry."""

import json
import math
import sys
from functools import cmp_to_key
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.epipolar_mvd.errors import (
    ConfigurationError,
    DegenerateGeometryError,
    SampleRangeError,
)
from src.epipolar_mvd.geometry import (
    CameraIntrinsics,
    CameraPose,
    epipole,
    fundamental_matrix,
    generate_layout,
    make_lookat_pose,
    pixel_directions,
    project_point,
    project_points,
    read_layout_json,
    relative_transform,
    sample_training_views,
    select_nearest_views,
    subset_layout,
    uniform_elevation_layout,
    unproject_point,
    write_layout_json,
)
from src.epipolar_mvd.tensor import DeterministicRng


@pytest.fixture(scope="module")
def layout():
    """The default 96-view training layout."""
    return generate_layout()


class TestIntrinsics:
    """Tests for CameraIntrinsics."""

    def test_focal_from_fov(self):
        """Test focal length is half the height over tan(fov / 2)."""
        intrinsics = CameraIntrinsics.from_fov_deg(32, 32, 90.0)
        assert intrinsics.focal == pytest.approx(16.0)
        assert (intrinsics.cx, intrinsics.cy) == (16.0, 16.0)

    def test_scaled_keeps_fov(self):
        """Test rescaling moves the principal point and keeps the field of view."""
        scaled = CameraIntrinsics.from_fov_deg(32, 32).scaled(8, 8)
        assert scaled.cx == 4.0
        assert scaled.fov_y == pytest.approx(math.radians(40.0))

    def test_non_uniform_rescale(self):
        """Test anisotropic rescales are rejected."""
        with pytest.raises(ConfigurationError):
            CameraIntrinsics.from_fov_deg(32, 32).scaled(8, 16)


class TestPoses:
    """Tests for poses and projection."""

    def test_identity_projects_principal_point(self):
        """Test a point on the optical axis lands on the principal point."""
        intrinsics = CameraIntrinsics.from_fov_deg(32, 32)
        projection = project_point(intrinsics, CameraPose.identity(), [0.0, 0.0, 2.0])
        assert (projection.u, projection.v) == (16.0, 16.0)
        assert projection.depth == 2.0
        assert projection.valid

    def test_point_behind_camera(self):
        """Test points behind the camera come back invalid."""
        intrinsics = CameraIntrinsics.from_fov_deg(32, 32)
        projection = project_point(intrinsics, CameraPose.identity(), [0.0, 0.0, -1.0])
        assert not projection.valid
        assert math.isnan(projection.u)

    def test_lookat_centers_target(self):
        """Test the look-at target projects to the image centre."""
        intrinsics = CameraIntrinsics.from_fov_deg(32, 32)
        pose = make_lookat_pose([1.0, 2.0, 0.5], target=[0.1, -0.2, 0.3])
        projection = project_point(intrinsics, pose, [0.1, -0.2, 0.3])
        assert projection.u == pytest.approx(16.0, abs=1e-9)
        assert projection.v == pytest.approx(16.0, abs=1e-9)
        assert np.allclose(pose.center, [1.0, 2.0, 0.5])

    def test_lookat_up_is_image_up(self):
        """Test world +z points toward the top of the image."""
        intrinsics = CameraIntrinsics.from_fov_deg(32, 32)
        pose = make_lookat_pose([2.0, 0.0, 0.0])
        assert project_point(intrinsics, pose, [0.0, 0.0, 0.3]).v < 16.0

    def test_lookat_degenerate(self):
        """Test a camera sitting on its target is rejected."""
        with pytest.raises(DegenerateGeometryError):
            make_lookat_pose([0.0, 0.0, 0.0])

    def test_lookat_straight_down(self):
        """Test the up-hint fallback when looking along the z-axis."""
        pose = make_lookat_pose([0.0, 0.0, 2.0])
        assert np.allclose(pose.rotation @ pose.rotation.T, np.eye(3))

    def test_invalid_rotation(self):
        """Test a non-orthogonal rotation is rejected."""
        with pytest.raises(DegenerateGeometryError):
            CameraPose(np.diag([1.0, 1.0, 2.0]))

    def test_unproject_inverts_project(self):
        """Test unprojecting at the projected depth recovers the point."""
        intrinsics = CameraIntrinsics.from_fov_deg(32, 32)
        pose = make_lookat_pose([1.5, -0.5, 0.8])
        point = np.array([0.2, 0.1, -0.3])
        p = project_point(intrinsics, pose, point)
        assert np.allclose(unproject_point(intrinsics, pose, p.u, p.v, p.depth), point)

    def test_pixel_directions_hit_projection(self):
        """Test the ray through a projected pixel passes through the point."""
        intrinsics = CameraIntrinsics.from_fov_deg(32, 32)
        pose = make_lookat_pose([0.0, 1.8, 0.4])
        point = np.array([0.3, -0.2, 0.1])
        pixel, _, _ = project_points(intrinsics, pose, point[None])
        direction = pixel_directions(intrinsics, pose, pixel)[0]
        offset = point - pose.center
        assert np.allclose(np.cross(direction, offset / np.linalg.norm(offset)), 0.0, atol=1e-12)

    def test_relative_transform_composes(self):
        """Test the relative transform maps camera-a coordinates into camera b."""
        a = make_lookat_pose([1.0, 1.0, 1.0])
        b = make_lookat_pose([-1.0, 0.5, 0.2])
        point = np.array([0.2, 0.3, -0.1])
        rel = relative_transform(a, b)
        assert np.allclose(rel.apply(a.apply(point)), b.apply(point))


class TestLayout:
    """Tests for view layouts."""

    def test_default_layout(self, layout):
        """Test 96 views on 6 rings, all looking at the origin."""
        assert len(layout) == 96
        assert sorted({v.elevation_deg for v in layout}) == [-10.0, 0.0, 10.0, 20.0, 30.0, 40.0]
        for view in layout:
            forward = view.pose.rotation[2]
            assert np.allclose(forward, -view.center / np.linalg.norm(view.center), atol=1e-9)
            assert np.linalg.norm(view.center) == pytest.approx(1.8)

    def test_eval_layout(self):
        """Test one ring of 16 azimuths."""
        ring = generate_layout((30.0,), 16)
        assert len(ring) == 16
        assert ring[4].azimuth_deg == 90.0

    def test_zero_azimuths(self):
        """Test an empty ring is rejected."""
        with pytest.raises(ConfigurationError):
            generate_layout((30.0,), 0)

    def test_uniform_elevation_layout(self):
        """Test evenly spread azimuths with cycling elevations."""
        layout = uniform_elevation_layout(12)
        assert len(layout) == 12
        assert [v.elevation_deg for v in layout][:7] == [-10, 0, 10, 20, 30, 40, -10]
        assert layout[3].azimuth_deg == 90.0

    def test_out_of_range_index(self, layout):
        """Test indexing past the end raises SampleRangeError."""
        with pytest.raises(SampleRangeError):
            layout[96]

    def test_nearest_views(self, layout):
        """Test the target comes first and its ring neighbours follow."""
        ring = generate_layout((30.0,), 16)
        nearest = select_nearest_views(ring, 0, 3)
        assert nearest == [0, 1, 15]
        assert select_nearest_views(layout, 5, 1) == [5]
        assert len(set(select_nearest_views(layout, 5, 96))) == 96

    def test_nearest_views_match_exhaustive_sort(self, layout):
        """Test every (target, K) pair of the 96-view layout against a full angular sort."""

        def angle(a, b):
            ea, eb = math.radians(a.elevation_deg), math.radians(b.elevation_deg)
            da = math.radians(a.azimuth_deg - b.azimuth_deg)
            cosine = math.sin(ea) * math.sin(eb) + math.cos(ea) * math.cos(eb) * math.cos(da)
            return math.acos(max(-1.0, min(1.0, cosine)))

        def compare(a, b):
            if abs(a[0] - b[0]) > 1e-9:
                return -1 if a[0] < b[0] else 1
            return a[1] - b[1]

        for target in range(96):
            others = [(angle(layout[target], layout[i]), i) for i in range(96) if i != target]
            expected = [target] + [i for _, i in sorted(others, key=cmp_to_key(compare))]
            for k in range(1, 97):
                assert select_nearest_views(layout, target, k) == expected[:k], (target, k)

    def test_nearest_views_symmetric_tie(self, layout):
        """Test views 10 and 14 are equally far from view 12 and the lower index wins."""
        order = select_nearest_views(layout, 12, 96)
        position = {view: rank for rank, view in enumerate(order)}
        assert position[14] == position[10] + 1

    def test_nearest_views_bad_k(self, layout):
        """Test K outside [1, N] is rejected."""
        with pytest.raises(ConfigurationError):
            select_nearest_views(layout, 0, 97)

    def test_training_subset(self, layout):
        """Test random 16-view draws are re-indexed and remember their sources."""
        subset = sample_training_views(layout, 16, DeterministicRng(2))
        assert len(subset) == 16
        assert [v.index for v in subset] == list(range(16))
        assert len(set(subset.source_indices)) == 16
        source = subset.source_indices[3]
        assert np.array_equal(subset[3].pose.rotation, layout[source].pose.rotation)

    def test_subset_fingerprint(self, layout):
        """Test fingerprints depend on the cameras."""
        first = subset_layout(layout, [0, 1]).fingerprint
        assert first != subset_layout(layout, [0, 2]).fingerprint
        assert generate_layout().fingerprint == layout.fingerprint

    def test_json_round_trip(self, layout, tmp_path):
        """Test a layout survives the camera JSON."""
        path = tmp_path / "cameras.json"
        write_layout_json(layout, path)
        restored = read_layout_json(path)
        assert len(restored) == 96
        assert np.allclose(restored[17].pose.rotation, layout[17].pose.rotation)
        assert restored[17].intrinsics.focal == pytest.approx(layout[17].intrinsics.focal)

    def test_json_wrong_rotation_size(self, layout, tmp_path):
        """Test a rotation with the wrong entry count raises ConfigurationError."""
        path = tmp_path / "cameras.json"
        write_layout_json(layout, path)
        data = json.loads(path.read_text())
        data["views"][3]["rotation"] = [1.0, 0.0, 0.0, 0.0]
        path.write_text(json.dumps(data))
        with pytest.raises(ConfigurationError):
            read_layout_json(path)

    def test_json_non_numeric_field(self, layout, tmp_path):
        """Test a non-numeric radius raises ConfigurationError."""
        path = tmp_path / "cameras.json"
        write_layout_json(layout, path)
        data = json.loads(path.read_text())
        data["views"][0]["radius"] = "far"
        path.write_text(json.dumps(data))
        with pytest.raises(ConfigurationError):
            read_layout_json(path)


class TestEpipolarGeometry:
    """Tests for fundamental matrices and epipoles."""

    def test_constraint_on_layout_pairs(self, layout):
        """Test p2ᵀ F p1 vanishes for 10^4 projected points."""
        rng = DeterministicRng(9)
        worst = 0.0
        for _ in range(100):
            i, j = rng.choice(96, 2)
            f = fundamental_matrix(layout[i].camera, layout[j].camera)
            points = rng.uniform((100, 3), -0.6, 0.6)
            p1, _, _ = project_points(*layout[i].camera, points)
            p2, _, _ = project_points(*layout[j].camera, points)
            worst = max(worst, float(np.abs(f.residual(p1, p2)).max()))
        assert worst < 1e-9

    def test_rank_two(self, layout):
        """Test F is rank 2 with unit norm."""
        f = fundamental_matrix(layout[0].camera, layout[40].camera)
        assert f.singular_ratio < 1e-12
        assert np.linalg.norm(f.matrix) == pytest.approx(1.0)

    def test_epipoles_are_null_vectors(self, layout):
        """Test F e1 = 0 and Fᵀ e2 = 0, and e1 matches the projected centre."""
        cam1, cam2 = layout[3].camera, layout[50].camera
        f = fundamental_matrix(cam1, cam2)
        e1, e2 = f.epipoles()
        assert np.abs(f.matrix @ e1).max() < 1e-12
        assert np.abs(f.matrix.T @ e2).max() < 1e-12
        assert np.allclose(epipole(cam1, cam2), e1 / e1[2])

    def test_epipolar_line_distance(self, layout):
        """Test the match of a pixel lies on its epipolar line."""
        cam1, cam2 = layout[0].camera, layout[2].camera
        f = fundamental_matrix(cam1, cam2)
        point = np.array([0.1, 0.2, 0.05])
        p1, _, _ = project_points(*cam1, point[None])
        p2, _, _ = project_points(*cam2, point[None])
        line = f.epipolar_line(p1[0])
        assert abs(line @ np.array([p2[0, 0], p2[0, 1], 1.0])) < 1e-9

    def test_coincident_centres(self):
        """Test two cameras at one centre have no fundamental matrix."""
        intrinsics = CameraIntrinsics.from_fov_deg(32, 32)
        a = make_lookat_pose([1.0, 0.0, 0.0])
        b = make_lookat_pose([1.0, 0.0, 0.0], target=[0.0, 1.0, 0.0])
        with pytest.raises(DegenerateGeometryError):
            fundamental_matrix((intrinsics, a), (intrinsics, b))
