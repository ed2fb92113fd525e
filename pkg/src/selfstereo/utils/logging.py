"""Logging configuration utilities."""
import logging
import sys

from rich.logging import RichHandler

_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
_level = logging.INFO


def configure_logger(name: str, level: int | None = None) -> logging.Logger:
    """Configure a logger with timestamp formatting.

    Args:
        name: Logger name (typically __name__)
        level: Logging level (default: the package-wide level, INFO unless changed)

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(_level if level is None else level)

    # Only add handler if not already configured
    if not logger.handlers:
        if sys.stderr.isatty():
            handler: logging.Handler = RichHandler(show_path=False)
            handler.setFormatter(logging.Formatter("%(name)s - %(message)s"))
        else:
            handler = logging.StreamHandler()
            handler.setFormatter(logging.Formatter(_FORMAT))
        logger.addHandler(handler)
        logger.propagate = False

    return logger


def get_logger(name: str) -> logging.Logger:
    """Get a configured logger instance.

    Args:
        name: Logger name (typically __name__)

    Returns:
        Logger instance
    """
    return configure_logger(name)


def set_log_level(level: int) -> None:
    """Apply a level to every selfstereo logger created so far and to later ones."""
    global _level
    _level = level
    for name, logger in logging.root.manager.loggerDict.items():
        if name.startswith("selfstereo") and isinstance(logger, logging.Logger):
            logger.setLevel(level)
