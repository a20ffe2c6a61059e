"""
Logging helpers.

Library modules call get_logger(__name__); only the CLI calls setup_logging.
"""

import logging
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

_ROOT = "quantum_uplink"
_handler: Optional[RichHandler] = None


def setup_logging(level: str = "INFO") -> logging.Logger:
    """Install a RichHandler on the package logger, writing to stderr."""
    global _handler

    logger = logging.getLogger(_ROOT)
    if _handler is None:
        _handler = RichHandler(
            console=Console(stderr=True),
            show_path=False,
            rich_tracebacks=True,
            markup=False,
        )
        _handler.setFormatter(logging.Formatter("%(message)s", datefmt="[%X]"))
        logger.addHandler(_handler)
    logger.setLevel(level.upper())
    logger.propagate = False
    return logger


def get_logger(name: str) -> logging.Logger:
    """Logger under the package namespace."""
    name = name.removeprefix("src.")
    if not name.startswith(_ROOT):
        name = f"{_ROOT}.{name}"
    return logging.getLogger(name)
