"""Logging setup for the command-line front ends."""

import logging

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str | int = "INFO") -> None:
    """
    Install one stream handler on the root logger.

    Args:
        level: Level name ("DEBUG", "INFO", ...) or numeric level.

    Raises:
        ValueError: If ``level`` is not a known level name.
    """
    if isinstance(level, str):
        numeric = logging.getLevelName(level.upper())
        if not isinstance(numeric, int):
            raise ValueError(f"Unknown log level: {level}")
        level = numeric
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)
