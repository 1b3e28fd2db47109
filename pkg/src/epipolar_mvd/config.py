"""Configuration management for epipolar-mvd."""

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from dotenv import load_dotenv

from .errors import ConfigurationError

TRAINING_ELEVATIONS_DEG = (-10.0, 0.0, 10.0, 20.0, 30.0, 40.0)


@dataclass
class CameraConfig:
    """Configuration for the camera layout."""

    elevations_deg: tuple[float, ...] = TRAINING_ELEVATIONS_DEG
    azimuth_count: int = 16
    radius: float = 1.8
    fov_y_deg: float = 40.0
    width: int = 32
    height: int = 32

    def __post_init__(self):
        """Validate ranges."""
        if not self.elevations_deg:
            raise ConfigurationError("At least one elevation ring is required")
        if self.azimuth_count < 1:
            raise ConfigurationError(f"azimuth_count must be >= 1, got {self.azimuth_count}")
        if self.radius <= 0:
            raise ConfigurationError(f"radius must be > 0, got {self.radius}")
        if not 0.0 < self.fov_y_deg < 180.0:
            raise ConfigurationError(f"fov_y_deg must be in (0, 180), got {self.fov_y_deg}")
        if self.width < 1 or self.height < 1:
            raise ConfigurationError(f"Image size must be positive, got {self.width}x{self.height}")


@dataclass
class SamplingConfig:
    """Configuration for epipolar sampling."""

    num_views_nearby: int = 4
    samples_per_ray: int = 16
    near_far_margin: float = 1.0  # near/far = |camera centre| -/+ margin

    def __post_init__(self):
        """Validate ranges."""
        if self.num_views_nearby < 1:
            raise ConfigurationError(f"K must be >= 1, got {self.num_views_nearby}")
        if self.samples_per_ray < 1:
            raise ConfigurationError(f"S must be >= 1, got {self.samples_per_ray}")
        if self.near_far_margin <= 0:
            raise ConfigurationError(f"near_far_margin must be > 0, got {self.near_far_margin}")


@dataclass
class EncodingConfig:
    """Configuration for the ray positional encoding."""

    num_frequencies: int = 4
    base_frequency: float = math.pi
    use_plucker: bool = True
    use_ray_relative: bool = True

    def __post_init__(self):
        """Validate ranges."""
        if self.num_frequencies < 0:
            raise ConfigurationError(f"num_frequencies must be >= 0, got {self.num_frequencies}")


@dataclass
class DiffusionConfig:
    """Configuration for the toy diffusion model and its training demo."""

    timesteps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    learning_rate: float = 2e-2
    momentum: float = 0.9
    latent_channels: int = 4
    hidden_channels: int = 8
    latent_size: int = 8
    views: int = 16
    latent_scale: float = 0.05  # encoder output multiplier
    sigma_data: float = 0.025  # assumed latent std for the skip gain

    def __post_init__(self):
        """Validate ranges."""
        if self.timesteps < 1:
            raise ConfigurationError(f"timesteps must be >= 1, got {self.timesteps}")
        if not 0.0 < self.beta_start <= self.beta_end < 1.0:
            raise ConfigurationError(
                f"Need 0 < beta_start <= beta_end < 1, got {self.beta_start}..{self.beta_end}"
            )
        if self.latent_size < 2 or self.latent_size % 2:
            raise ConfigurationError(f"latent_size must be even and >= 2, got {self.latent_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.latent_scale <= 0 or self.sigma_data <= 0:
            raise ConfigurationError(
                f"Scales must be > 0, got {self.latent_scale} and {self.sigma_data}"
            )


@dataclass
class LoggingConfig:
    """Configuration for logging."""

    level: str = "INFO"
    log_dir: Path = field(default_factory=lambda: Path("logs"))
    enable_file_logging: bool = False

    def __post_init__(self):
        """Ensure log directory exists."""
        if self.enable_file_logging:
            self.log_dir.mkdir(parents=True, exist_ok=True)


@dataclass
class Config:
    """Main configuration class."""

    camera: CameraConfig = field(default_factory=CameraConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    encoding: EncodingConfig = field(default_factory=EncodingConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)
    seed: int = 0

    @classmethod
    def from_env(cls) -> "Config":
        """Create configuration from environment variables (and a ``.env`` file if present)."""
        load_dotenv()

        camera_config = CameraConfig(
            radius=float(os.getenv("EPIPOLAR_CAMERA_RADIUS", "1.8")),
            fov_y_deg=float(os.getenv("EPIPOLAR_FOV_Y_DEG", "40.0")),
            width=int(os.getenv("EPIPOLAR_IMAGE_SIZE", "32")),
            height=int(os.getenv("EPIPOLAR_IMAGE_SIZE", "32")),
        )

        sampling_config = SamplingConfig(
            num_views_nearby=int(os.getenv("EPIPOLAR_K", "4")),
            samples_per_ray=int(os.getenv("EPIPOLAR_S", "16")),
        )

        encoding_config = EncodingConfig(
            num_frequencies=int(os.getenv("EPIPOLAR_HARMONIC_FREQUENCIES", "4")),
            use_plucker=os.getenv("EPIPOLAR_USE_PLUCKER", "true").lower() == "true",
            use_ray_relative=os.getenv("EPIPOLAR_USE_RAY_RELATIVE", "true").lower() == "true",
        )

        diffusion_config = DiffusionConfig(
            timesteps=int(os.getenv("EPIPOLAR_TIMESTEPS", "100")),
            learning_rate=float(os.getenv("EPIPOLAR_LEARNING_RATE", "2e-2")),
        )

        logging_config = LoggingConfig(
            level=os.getenv("LOG_LEVEL", "INFO"),
            enable_file_logging=os.getenv("ENABLE_FILE_LOGGING", "false").lower() == "true",
        )

        return cls(
            camera=camera_config,
            sampling=sampling_config,
            encoding=encoding_config,
            diffusion=diffusion_config,
            logging=logging_config,
            seed=int(os.getenv("EPIPOLAR_SEED", "0")),
        )

    def to_dict(self) -> dict:
        """Convert configuration to dictionary."""
        return {
            "seed": self.seed,
            "camera": {
                "elevations_deg": list(self.camera.elevations_deg),
                "azimuth_count": self.camera.azimuth_count,
                "radius": self.camera.radius,
                "fov_y_deg": self.camera.fov_y_deg,
                "width": self.camera.width,
                "height": self.camera.height,
            },
            "sampling": {
                "K": self.sampling.num_views_nearby,
                "S": self.sampling.samples_per_ray,
                "near_far_margin": self.sampling.near_far_margin,
            },
            "encoding": {
                "num_frequencies": self.encoding.num_frequencies,
                "base_frequency": self.encoding.base_frequency,
                "use_plucker": self.encoding.use_plucker,
                "use_ray_relative": self.encoding.use_ray_relative,
            },
            "diffusion": {
                "timesteps": self.diffusion.timesteps,
                "beta_start": self.diffusion.beta_start,
                "beta_end": self.diffusion.beta_end,
                "learning_rate": self.diffusion.learning_rate,
                "momentum": self.diffusion.momentum,
                "latent_channels": self.diffusion.latent_channels,
                "hidden_channels": self.diffusion.hidden_channels,
                "latent_size": self.diffusion.latent_size,
                "views": self.diffusion.views,
                "latent_scale": self.diffusion.latent_scale,
                "sigma_data": self.diffusion.sigma_data,
            },
            "logging": {
                "level": self.logging.level,
                "enable_file_logging": self.logging.enable_file_logging,
            },
        }
