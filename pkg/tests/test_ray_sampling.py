"""Tests for target rays, depth samples, bilinear lookups and the feature volume."""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.epipolar_mvd.errors import ConfigurationError, SampleRangeError, ShapeError
from src.epipolar_mvd.geometry import (
    CameraIntrinsics,
    fundamental_matrix,
    generate_layout,
    homogeneous,
    make_lookat_pose,
    project_points,
)
from src.epipolar_mvd.sampling import (
    Ray,
    bilinear_gather,
    bilinear_sample,
    bilinear_scatter,
    bilinear_taps,
    build_sample_geometry,
    build_sample_volume,
    gather_sample_features,
    load_sample_map,
    rays_from_feature_map,
    reproject_samples,
    sample_depths,
    save_sample_map,
    scatter_sample_grads,
)
from src.epipolar_mvd.tensor import DeterministicRng


@pytest.fixture(scope="module")
def ring():
    """16 views at 30 degrees elevation."""
    return generate_layout((30.0,), 16)


def _scalar_bilinear(feature_map, u, v):
    height, width, _ = feature_map.shape
    x, y = u - 0.5, v - 0.5
    x0, y0 = math.floor(x), math.floor(y)
    fx, fy = x - x0, y - y0
    total = np.zeros(feature_map.shape[2])
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            row = min(max(y0 + dy, 0), height - 1)
            col = min(max(x0 + dx, 0), width - 1)
            total += wy * wx * feature_map[row, col]
    return total


class TestRays:
    """Tests for rays_from_feature_map."""

    def test_single_patch_is_principal_axis(self):
        """Test a 1x1 grid gives one ray along the optical axis."""
        pose = make_lookat_pose([1.8, 0.0, 0.0])
        rays = rays_from_feature_map(CameraIntrinsics.from_fov_deg(32, 32), pose, 1, 1)
        assert len(rays) == 1
        assert np.allclose(rays.directions[0], [-1.0, 0.0, 0.0], atol=1e-12)

    def test_patch_centres_reproject(self, ring):
        """Test points on each ray of a 4x4 grid project back onto its patch centre."""
        view = ring[2]
        intrinsics = view.intrinsics.scaled(4, 4)
        rays = rays_from_feature_map(intrinsics, view.pose, 4, 4)
        points = rays.points_at(np.array([1.8]))[:, 0]
        pixels, _, _ = project_points(intrinsics, view.pose, points)
        expected = np.array([[j + 0.5, i + 0.5] for i in range(4) for j in range(4)])
        assert np.abs(pixels - expected).max() < 1e-9

    def test_empty_grid(self, ring):
        """Test a zero-size grid is rejected."""
        with pytest.raises(ConfigurationError):
            rays_from_feature_map(ring[0].intrinsics, ring[0].pose, 0, 4)


class TestDepths:
    """Tests for sample_depths."""

    def test_single_sample(self):
        """Test S = 1 sits in the middle."""
        assert sample_depths(0.8, 2.8, 1).tolist() == pytest.approx([1.8])

    def test_sixteen_bins(self):
        """Test near 0.8, far 2.8, S 16."""
        depths = sample_depths(0.8, 2.8, 16)
        assert depths[0] == pytest.approx(0.8625)
        assert depths[-1] == pytest.approx(2.7375)
        assert np.allclose(np.diff(depths), 0.125)

    @pytest.mark.parametrize("near,far", [(0.0, 1.0), (2.0, 1.0), (1.0, 1.0)])
    def test_bad_range(self, near, far):
        """Test near must be positive and below far."""
        with pytest.raises(ConfigurationError):
            sample_depths(near, far, 4)


class TestReprojection:
    """Tests for reproject_samples."""

    def test_self_reprojection(self, ring):
        """Test projecting into the originating camera returns the patch centre."""
        intrinsics, pose = ring[0].camera
        rays = rays_from_feature_map(intrinsics, pose, 32, 32)
        pixels, valid = reproject_samples(rays[100], sample_depths(0.8, 2.8, 16), intrinsics, pose)
        assert valid.all()
        assert np.abs(pixels - [100 % 32 + 0.5, 100 // 32 + 0.5]).max() < 1e-9

    def test_on_epipolar_line(self, ring):
        """Test reprojected samples satisfy the epipolar constraint."""
        cam1, cam2 = ring[0].camera, ring[1].camera
        rays = rays_from_feature_map(*cam1, 32, 32)
        ray = rays[37]
        pixels, _ = reproject_samples(ray, sample_depths(0.8, 2.8, 16), *cam2)
        f = fundamental_matrix(cam1, cam2)
        origin = np.array([37 % 32 + 0.5, 37 // 32 + 0.5])
        residual = f.residual(np.broadcast_to(origin, pixels.shape), pixels)
        assert np.abs(residual).max() < 1e-9
        h = homogeneous(pixels)
        assert abs(np.linalg.det(h[[0, 7, 15]])) < 1e-6 * np.linalg.norm(h) ** 3

    def test_behind_camera_is_invalid(self):
        """Test a point behind the reference camera is flagged."""
        intrinsics = CameraIntrinsics.from_fov_deg(32, 32)
        ray = Ray([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])
        reference = make_lookat_pose([-1.0, 0.0, 0.0], target=[-2.0, 0.0, 0.0])
        _, valid = reproject_samples(ray, np.array([0.5, 1.5]), intrinsics, reference)
        assert not valid.any()


class TestBilinear:
    """Tests for bilinear lookups."""

    def test_pixel_centre(self):
        """Test a pixel centre returns that pixel."""
        feature_map = np.arange(2 * 3 * 2, dtype=np.float64).reshape(2, 3, 2)
        assert np.array_equal(bilinear_sample(feature_map, 1.5, 0.5), feature_map[0, 1])

    def test_midpoint(self):
        """Test the point between four centres returns their mean."""
        feature_map = np.arange(2 * 3 * 2, dtype=np.float64).reshape(2, 3, 2)
        expected = feature_map[:2, 1:3].reshape(4, 2).mean(axis=0)
        assert np.allclose(bilinear_sample(feature_map, 2.0, 1.0), expected)

    def test_matches_scalar_formula(self):
        """Test random samples on a 5x5 map against a scalar implementation."""
        rng = DeterministicRng(4)
        feature_map = rng.normal((5, 5, 3))
        for u, v in rng.uniform((50, 2), 0.0, 4.999):
            expected = _scalar_bilinear(feature_map, u, v)
            assert np.abs(bilinear_sample(feature_map, u, v) - expected).max() < 1e-12

    def test_out_of_range(self):
        """Test samples outside the map raise."""
        with pytest.raises(SampleRangeError):
            bilinear_sample(np.zeros((4, 4, 1)), 4.0, 1.0)

    def test_scatter_is_adjoint(self):
        """Test <gather(m), g> equals <m, scatter(g)>."""
        rng = DeterministicRng(6)
        flat = rng.normal((20, 3))
        indices, weights = bilinear_taps(rng.uniform((7, 2), 0.0, 4.0), 5, 4)
        grad = rng.normal((7, 3))
        lhs = np.sum(bilinear_gather(flat, indices, weights) * grad)
        rhs = np.sum(flat * bilinear_scatter(grad, indices, weights, 20))
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestSampleVolume:
    """Tests for the epipolar feature volume."""

    def test_k4_s16_shape(self, ring):
        """Test K = 4, S = 16 over 32x32 maps."""
        maps = [np.full((32, 32, 5), float(i)) for i in range(16)]
        volume = build_sample_volume(0, ring, maps, 4, 16)
        assert volume.features.shape == (4, 1024, 16, 5)
        assert volume.valid.shape == (4, 1024, 16)
        assert volume.view_indices == (0, 1, 15, 2)
        assert volume.near == pytest.approx(0.8)
        assert volume.far == pytest.approx(2.8)

    def test_invalid_samples_are_zero(self, ring):
        """Test invalid samples carry zero features and valid ones the view's constant."""
        maps = [np.full((8, 8, 2), float(i + 1)) for i in range(16)]
        volume = build_sample_volume(0, ring, maps, 4, 8)
        for slot, view in enumerate(volume.view_indices):
            assert np.all(volume.features[slot][~volume.valid[slot]] == 0.0)
            assert np.allclose(volume.features[slot][volume.valid[slot]], view + 1)

    def test_target_slot_reads_own_pixel(self, ring):
        """Test slot 0 samples every target patch at its own centre."""
        rng = DeterministicRng(8)
        maps = [rng.normal((8, 8, 3)) for _ in range(16)]
        volume = build_sample_volume(5, ring, maps, 1, 4)
        assert volume.valid.all()
        own = maps[5].reshape(64, 3)
        assert np.abs(volume.features[0] - own[:, None, :]).max() < 1e-9

    def test_target_out_of_range(self, ring):
        """Test a bad target index raises."""
        maps = [np.zeros((4, 4, 1))] * 16
        with pytest.raises(SampleRangeError):
            build_sample_volume(16, ring, maps, 4, 4)

    def test_map_count_mismatch(self, ring):
        """Test one map per view is required."""
        with pytest.raises(ShapeError):
            build_sample_volume(0, ring, [np.zeros((4, 4, 1))] * 3, 2, 4)

    def test_scatter_is_gather_adjoint(self, ring):
        """Test scatter_sample_grads is the adjoint of gather_sample_features."""
        rng = DeterministicRng(12)
        geometry = build_sample_geometry(ring, 3, 4, 4, 3, 5)
        maps = [rng.normal((4, 4, 2)) for _ in range(16)]
        grad = rng.normal(geometry.valid.shape + (2,))
        lhs = np.sum(gather_sample_features(geometry, maps) * grad)
        grads = scatter_sample_grads(geometry, grad, 16)
        rhs = sum(np.sum(m * g) for m, g in zip(maps, grads))
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_save_and_load(self, ring, tmp_path):
        """Test the volume can be written and read back."""
        maps = [np.full((4, 4, 2), 0.5 * i) for i in range(16)]
        volume = build_sample_volume(2, ring, maps, 3, 4)
        save_sample_map(volume, tmp_path / "map")
        restored = load_sample_map(tmp_path / "map")
        assert restored.view_indices == volume.view_indices
        assert np.array_equal(restored.valid, volume.valid)
        assert np.allclose(restored.features, volume.features)
        assert (tmp_path / "map" / "sample_map.json").exists()
