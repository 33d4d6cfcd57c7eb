# app/logging_config.py
import logging
import sys

import structlog
from pythonjsonlogger import jsonlogger


def configure_logging(level: str = "INFO", fmt: str = "console") -> None:
    """Route structlog through stdlib logging, one stderr handler."""
    handler = logging.StreamHandler(sys.stderr)
    shared = [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_logger_name,
        structlog.stdlib.add_log_level,
        structlog.processors.TimeStamper(fmt="iso"),
    ]
    if fmt == "json":
        handler.setFormatter(jsonlogger.JsonFormatter("%(message)s"))
        processors = shared + [structlog.stdlib.render_to_log_kwargs]
    else:
        handler.setFormatter(logging.Formatter("%(message)s"))
        processors = shared + [structlog.dev.ConsoleRenderer(colors=False)]

    root = logging.getLogger()
    root.handlers = [handler]
    root.setLevel(level.upper())

    structlog.configure(
        processors=processors,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=False,
    )
