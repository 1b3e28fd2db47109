"""ECA block configuration, parameters and checkpoints."""

import json
from collections.abc import Iterator
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ..config import Config
from ..encoding import PLUCKER_DIM, HarmonicConfig
from ..errors import ConfigurationError, ShapeError
from ..tensor import (
    DeterministicRng,
    LinearParams,
    glorot_uniform,
    tensor_read,
    tensor_write,
)
from ..utils.logger import get_logger

logger = get_logger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class EcaConfig:
    """Sizes and switches of one ECA block."""

    k: int = 4
    samples: int = 16
    channels: int = 8
    near: float | None = None  # None: camera distance - 1
    far: float | None = None  # None: camera distance + 1
    harmonic: HarmonicConfig = field(default_factory=HarmonicConfig)
    use_plucker: bool = True
    use_ray_relative: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ConfigurationError(f"K must be >= 1, got {self.k}")
        if self.samples < 1:
            raise ConfigurationError(f"S must be >= 1, got {self.samples}")
        if self.channels < 1:
            raise ConfigurationError(f"C must be >= 1, got {self.channels}")
        if self.near is not None and self.far is not None and not 0.0 < self.near < self.far:
            raise ConfigurationError(f"Need 0 < near < far, got {self.near}, {self.far}")

    @classmethod
    def from_config(cls, config: Config, channels: int) -> "EcaConfig":
        return cls(
            k=config.sampling.num_views_nearby,
            samples=config.sampling.samples_per_ray,
            channels=channels,
            harmonic=HarmonicConfig.from_config(config.encoding),
            use_plucker=config.encoding.use_plucker,
            use_ray_relative=config.encoding.use_ray_relative,
        )

    @property
    def encoding_dim(self) -> int:
        return self.harmonic.output_dim(PLUCKER_DIM)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "samples": self.samples,
            "channels": self.channels,
            "near": self.near,
            "far": self.far,
            "num_frequencies": self.harmonic.num_frequencies,
            "base_frequency": self.harmonic.base_frequency,
            "use_plucker": self.use_plucker,
            "use_ray_relative": self.use_ray_relative,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EcaConfig":
        return cls(
            k=int(data["k"]),
            samples=int(data["samples"]),
            channels=int(data["channels"]),
            near=data.get("near"),
            far=data.get("far"),
            harmonic=HarmonicConfig(int(data["num_frequencies"]), float(data["base_frequency"])),
            use_plucker=bool(data["use_plucker"]),
            use_ray_relative=bool(data["use_ray_relative"]),
        )


@dataclass
class EcaBlockParams:
    """All trainable tensors of one ECA block."""

    cross_q: LinearParams
    cross_k: LinearParams
    cross_v: LinearParams
    cross_out: LinearParams
    ray_q: LinearParams
    ray_k: LinearParams
    ray_v: LinearParams
    ray_out: LinearParams
    ray_encoding: LinearParams
    fusion: LinearParams
    output: LinearParams

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def items(self) -> Iterator[tuple[str, LinearParams]]:
        for name in self.names():
            yield name, getattr(self, name)

    def tensors(self) -> Iterator[tuple[str, np.ndarray]]:
        """Every weight and bias array, named ``<layer>.weight`` / ``<layer>.bias``."""
        for name, layer in self.items():
            yield f"{name}.weight", layer.weight
            yield f"{name}.bias", layer.bias

    def zeros_like(self) -> "EcaBlockParams":
        return EcaBlockParams(**{name: layer.zeros_like() for name, layer in self.items()})

    def copy(self) -> "EcaBlockParams":
        return EcaBlockParams(**{name: layer.copy() for name, layer in self.items()})

    def __add__(self, other: "EcaBlockParams") -> "EcaBlockParams":
        return EcaBlockParams(
            **{name: layer + getattr(other, name) for name, layer in self.items()}
        )

    def expected_shapes(self, config: EcaConfig) -> dict[str, tuple[int, int]]:
        c = config.channels
        shapes = {name: (c, c) for name in self.names()}
        shapes["ray_encoding"] = (c, config.encoding_dim)
        shapes["fusion"] = (1, c)
        return shapes

    def validate(self, config: EcaConfig) -> None:
        for name, shape in self.expected_shapes(config).items():
            actual = getattr(self, name).weight.shape
            if actual != shape:
                raise ShapeError(f"ECA parameter {name}: expected {shape}, got {actual}")


def init_params(
    rng: DeterministicRng, config: EcaConfig, zero_output: bool = True
) -> EcaBlockParams:
    """
    Glorot-uniform weights and zero biases, drawn in field order.

    With ``zero_output`` (the default) the final projection is all zeros, so the
    block starts as an exact identity on its target map.
    """
    c = config.channels
    layers = {}
    for name in EcaBlockParams.names():
        if name == "ray_encoding":
            layers[name] = glorot_uniform(rng, c, config.encoding_dim)
        elif name == "fusion":
            layers[name] = glorot_uniform(rng, 1, c)
        elif name == "output" and zero_output:
            layers[name] = LinearParams.zeros(c, c)
        else:
            layers[name] = glorot_uniform(rng, c, c)
    return EcaBlockParams(**layers)


def save_params(params: EcaBlockParams, config: EcaConfig, directory: Path | str) -> None:
    """Write every tensor as ``<name>.etz`` plus ``manifest.json`` with shapes and config."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    shapes = {}
    for name, array in params.tensors():
        tensor_write(array, directory / f"{name}.etz")
        shapes[name] = list(array.shape)
    manifest = {"config": config.to_dict(), "tensors": shapes}
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2))
    logger.debug(f"Saved ECA parameters to {directory}")


def load_params(directory: Path | str) -> tuple[EcaBlockParams, EcaConfig]:
    """
    Read a checkpoint written by ``save_params``.

    Raises:
        ShapeError: If a stored tensor does not match the stored config
    """
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST_NAME).read_text())
    config = EcaConfig.from_dict(manifest["config"])
    layers = {}
    for name in EcaBlockParams.names():
        weight = tensor_read(directory / f"{name}.weight.etz")
        bias = tensor_read(directory / f"{name}.bias.etz")
        recorded = tuple(manifest["tensors"][f"{name}.weight"])
        if weight.shape != recorded:
            raise ShapeError(f"{name}.weight: manifest says {recorded}, file has {weight.shape}")
        layers[name] = LinearParams(weight, bias)
    params = EcaBlockParams(**layers)
    params.validate(config)
    return params, config
