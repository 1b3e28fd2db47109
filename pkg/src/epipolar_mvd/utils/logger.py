"""Logging utilities for epipolar-mvd."""

import logging
import os
import sys
from pathlib import Path

PACKAGE_LOGGER = "epipolar_mvd"

LOG_FORMAT = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


class ColoredFormatter(logging.Formatter):
    """Formatter that colours the level name when writing to a terminal."""

    COLORS = {
        "DEBUG": "\033[36m",  # Cyan
        "INFO": "\033[32m",  # Green
        "WARNING": "\033[33m",  # Yellow
        "ERROR": "\033[31m",  # Red
        "CRITICAL": "\033[35m",  # Magenta
    }
    RESET = "\033[0m"

    def format(self, record: logging.LogRecord) -> str:
        """Format log record with colors."""
        levelname = record.levelname
        log_color = self.COLORS.get(levelname, self.RESET)
        record.levelname = f"{log_color}{levelname}{self.RESET}"
        try:
            return super().format(record)
        finally:
            record.levelname = levelname


def setup_logger(
    name: str,
    level: int = logging.INFO,
    log_file: Path | None = None,
    colored: bool | None = None,
) -> logging.Logger:
    """
    Set up a logger with console and optional file output.

    Console output goes to stderr; stdout is reserved for JSON reports.

    Args:
        name: Logger name
        level: Logging level
        log_file: Optional path to log file
        colored: Force colours on/off (default: stderr is a TTY and NO_COLOR is unset)

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)
    logger.handlers.clear()

    if colored is None:
        colored = sys.stderr.isatty() and "NO_COLOR" not in os.environ

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    formatter_cls = ColoredFormatter if colored else logging.Formatter
    console_handler.setFormatter(formatter_cls(fmt=LOG_FORMAT, datefmt=DATE_FORMAT))
    logger.addHandler(console_handler)

    if log_file:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(level)
        file_handler.setFormatter(logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT))
        logger.addHandler(file_handler)

    return logger


def get_logger(name: str) -> logging.Logger:
    """Get or create a logger with the given name."""
    return logging.getLogger(name)


def configure_logging(
    level: str, log_dir: Path | None = None, command: str = "run"
) -> logging.Logger:
    """Configure the package logger for one command, logging to ``<log_dir>/<command>.log``."""
    log_file = log_dir / f"{command}.log" if log_dir is not None else None
    return setup_logger(PACKAGE_LOGGER, level=getattr(logging, level.upper()), log_file=log_file)
