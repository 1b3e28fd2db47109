"""Exception hierarchy for epipolar-mvd."""


class EpipolarError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(EpipolarError, ValueError):
    """Tensor dimensions do not agree."""


class ConfigurationError(EpipolarError, ValueError):
    """A parameter is outside its documented range."""


class DegenerateGeometryError(EpipolarError, ValueError):
    """Camera configuration with no well-defined answer (zero baseline, position == target)."""


class SampleRangeError(EpipolarError, IndexError):
    """A sample coordinate or view index lies outside the valid range."""


class TensorFormatError(EpipolarError, ValueError):
    """An ``.etz`` file is malformed."""


class MissingContextError(EpipolarError, RuntimeError):
    """A backward pass was requested without a saved forward context."""


class NonFiniteError(EpipolarError, FloatingPointError):
    """A function evaluated to NaN or Inf where a finite value is required."""
