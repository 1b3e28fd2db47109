"""Utility modules for epipolar-mvd."""

from .logger import configure_logging, get_logger, setup_logger
from .metrics import MetricsCollector, StageMetrics

__all__ = ["configure_logging", "setup_logger", "get_logger", "MetricsCollector", "StageMetrics"]
