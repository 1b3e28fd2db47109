"""Epipolar MVD - epipolar-constrained multiview diffusion, verifiable on a CPU."""

__version__ = "0.1.0"

from .config import (
    CameraConfig,
    Config,
    DiffusionConfig,
    EncodingConfig,
    LoggingConfig,
    SamplingConfig,
)
from .eca import EcaBlockParams, EcaConfig, eca_backward, eca_forward, init_params
from .errors import (
    ConfigurationError,
    DegenerateGeometryError,
    EpipolarError,
    MissingContextError,
    NonFiniteError,
    SampleRangeError,
    ShapeError,
    TensorFormatError,
)
from .geometry import ViewLayout, fundamental_matrix, generate_layout
from .sampling import EpipolarSampleMap, build_sample_volume
from .utils.logger import get_logger, setup_logger

__all__ = [
    # Version
    "__version__",
    # Configuration
    "Config",
    "CameraConfig",
    "SamplingConfig",
    "EncodingConfig",
    "DiffusionConfig",
    "LoggingConfig",
    # Errors
    "EpipolarError",
    "ShapeError",
    "ConfigurationError",
    "DegenerateGeometryError",
    "SampleRangeError",
    "TensorFormatError",
    "MissingContextError",
    "NonFiniteError",
    # Geometry and sampling
    "ViewLayout",
    "generate_layout",
    "fundamental_matrix",
    "EpipolarSampleMap",
    "build_sample_volume",
    # Attention block
    "EcaConfig",
    "EcaBlockParams",
    "init_params",
    "eca_forward",
    "eca_backward",
    # Utils
    "get_logger",
    "setup_logger",
]
