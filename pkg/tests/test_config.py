"""Tests for configuration management."""

import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.epipolar_mvd.config import (
    CameraConfig,
    Config,
    DiffusionConfig,
    EncodingConfig,
    LoggingConfig,
    SamplingConfig,
)
from src.epipolar_mvd.errors import ConfigurationError


class TestCameraConfig:
    """Tests for CameraConfig."""

    def test_default_config(self):
        """Test the default layout reproduces 6 rings of 16 views."""
        config = CameraConfig()
        assert config.elevations_deg == (-10.0, 0.0, 10.0, 20.0, 30.0, 40.0)
        assert config.azimuth_count == 16
        assert len(config.elevations_deg) * config.azimuth_count == 96
        assert config.radius == 1.8

    def test_rejects_zero_azimuths(self):
        """Test azimuth_count must be positive."""
        with pytest.raises(ConfigurationError):
            CameraConfig(azimuth_count=0)

    def test_rejects_bad_fov(self):
        """Test the field of view must lie in (0, 180)."""
        with pytest.raises(ConfigurationError):
            CameraConfig(fov_y_deg=180.0)


class TestSamplingConfig:
    """Tests for SamplingConfig."""

    def test_default_config(self):
        """Test default K and S."""
        config = SamplingConfig()
        assert config.num_views_nearby == 4
        assert config.samples_per_ray == 16

    @pytest.mark.parametrize("field", ["num_views_nearby", "samples_per_ray"])
    def test_rejects_zero(self, field):
        """Test K and S must be at least 1."""
        with pytest.raises(ConfigurationError):
            SamplingConfig(**{field: 0})


class TestEncodingConfig:
    """Tests for EncodingConfig."""

    def test_default_config(self):
        """Test default encoding switches."""
        config = EncodingConfig()
        assert config.num_frequencies == 4
        assert config.base_frequency == math.pi
        assert config.use_plucker is True
        assert config.use_ray_relative is True


class TestDiffusionConfig:
    """Tests for DiffusionConfig."""

    def test_default_config(self):
        """Test default schedule."""
        config = DiffusionConfig()
        assert config.timesteps == 100
        assert config.beta_start == 1e-4
        assert config.beta_end == 2e-2
        assert config.views == 16
        assert config.learning_rate == 2e-2

    def test_rejects_inverted_betas(self):
        """Test beta_start must not exceed beta_end."""
        with pytest.raises(ConfigurationError):
            DiffusionConfig(beta_start=0.1, beta_end=0.01)

    def test_rejects_odd_latent_size(self):
        """Test the latent size must be even for the pooling level."""
        with pytest.raises(ConfigurationError):
            DiffusionConfig(latent_size=7)

    @pytest.mark.parametrize("field", ["latent_scale", "sigma_data"])
    def test_rejects_non_positive_scale(self, field):
        """Test the latent scale and the assumed latent std must be positive."""
        with pytest.raises(ConfigurationError):
            DiffusionConfig(**{field: 0.0})


class TestLoggingConfig:
    """Tests for LoggingConfig."""

    def test_default_config(self):
        """Test default logging configuration."""
        config = LoggingConfig()
        assert config.level == "INFO"
        assert config.enable_file_logging is False


class TestConfig:
    """Tests for main Config class."""

    def test_default_config(self):
        """Test default configuration."""
        config = Config()
        assert config.seed == 0
        assert config.sampling.num_views_nearby == 4
        assert config.logging.level == "INFO"

    def test_from_env(self, monkeypatch):
        """Test configuration from environment."""
        monkeypatch.setenv("EPIPOLAR_K", "8")
        monkeypatch.setenv("EPIPOLAR_S", "32")
        monkeypatch.setenv("EPIPOLAR_SEED", "7")
        monkeypatch.setenv("EPIPOLAR_USE_PLUCKER", "false")
        monkeypatch.setenv("LOG_LEVEL", "DEBUG")

        config = Config.from_env()

        assert config.sampling.num_views_nearby == 8
        assert config.sampling.samples_per_ray == 32
        assert config.seed == 7
        assert config.encoding.use_plucker is False
        assert config.logging.level == "DEBUG"

    def test_from_env_rejects_bad_values(self, monkeypatch):
        """Test invalid environment values surface as ConfigurationError."""
        monkeypatch.setenv("EPIPOLAR_K", "0")
        with pytest.raises(ConfigurationError):
            Config.from_env()

    def test_to_dict(self):
        """Test conversion to dictionary."""
        config = Config()
        config_dict = config.to_dict()

        assert config_dict["seed"] == 0
        assert config_dict["sampling"]["K"] == 4
        assert config_dict["sampling"]["S"] == 16
        assert config_dict["camera"]["elevations_deg"] == [-10.0, 0.0, 10.0, 20.0, 30.0, 40.0]
        assert config_dict["diffusion"]["timesteps"] == 100
