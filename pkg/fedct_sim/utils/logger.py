"""
Logging helpers.

All simulator loggers live under the ``fedct_sim`` namespace. Structured
context is passed as ``extra={"context": {...}}`` and rendered by the JSON
formatter as top-level keys.
"""

import json
import logging
import sys
from typing import Any, Dict, Optional

ROOT_LOGGER_NAME = "fedct_sim"

_PLAIN_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


class JsonLinesFormatter(logging.Formatter):
    """Render each record as a single JSON object."""

    def format(self, record: logging.LogRecord) -> str:
        payload: Dict[str, Any] = {
            "time": self.formatTime(record),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        context = getattr(record, "context", None)
        if isinstance(context, dict):
            payload.update(context)
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        return json.dumps(payload, default=str)


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """
    Get a logger in the simulator namespace.

    Args:
        name: Dotted suffix such as ``"protocol.server"``; None returns the root

    Returns:
        Logger instance
    """
    if not name:
        return logging.getLogger(ROOT_LOGGER_NAME)
    if name.startswith(ROOT_LOGGER_NAME):
        return logging.getLogger(name)
    return logging.getLogger(f"{ROOT_LOGGER_NAME}.{name}")


def configure_logging(level: str = "INFO", json_lines: bool = False) -> logging.Logger:
    """
    Install a single stream handler on the simulator root logger.

    Calling this again replaces the previous handler.

    Args:
        level: Logging level name
        json_lines: Emit one JSON object per record instead of plain text

    Returns:
        The configured root logger
    """
    logger = get_logger()
    for handler in list(logger.handlers):
        logger.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    if json_lines:
        handler.setFormatter(JsonLinesFormatter())
    else:
        handler.setFormatter(logging.Formatter(_PLAIN_FORMAT))

    logger.addHandler(handler)
    logger.setLevel(level.upper())
    logger.propagate = False
    return logger
