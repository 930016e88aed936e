"""Structured logging to stderr."""

from __future__ import annotations

import logging
import sys

LOGGER_NAME = "vp_codec_bench"

_FORMAT = "[%(asctime)s] %(levelname)-7s %(message)s"
# used in pool worker processes
_WORKER_FORMAT = "[%(asctime)s] %(levelname)-7s %(processName)s %(message)s"


def setup_logging(verbose: bool = False, worker: bool = False) -> logging.Logger:
    """Configure and return the vp-codec-bench logger.

    Idempotent: a second call only raises the level when verbose is set.
    """
    logger = logging.getLogger(LOGGER_NAME)
    if logger.handlers:
        if verbose:
            logger.setLevel(logging.DEBUG)
            for handler in logger.handlers:
                handler.setLevel(logging.DEBUG)
        return logger

    level = logging.DEBUG if verbose else logging.INFO
    logger.setLevel(level)

    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(_WORKER_FORMAT if worker else _FORMAT, datefmt="%H:%M:%S"))
    logger.addHandler(handler)
    return logger


def get_logger() -> logging.Logger:
    """Get the vp-codec-bench logger (must call setup_logging first)."""
    return logging.getLogger(LOGGER_NAME)


def log_stage(number: int, title: str) -> None:
    get_logger().info("=== Stage %d: %s ===", number, title)


def log_progress(done: int, total: int, unit: str = "tuples") -> None:
    """Progress line at DEBUG, promoted to INFO roughly every tenth of the run."""
    step = max(1, total // 10)
    level = logging.INFO if done == total or done % step == 0 else logging.DEBUG
    get_logger().log(level, "Progress: %d/%d %s complete", done, total, unit)
