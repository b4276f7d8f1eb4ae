"""
Structured logging with JSON output (console rendering on request)
"""

import logging
import sys
import time
from typing import Optional

import structlog

from .settings import get_settings

_configured = False


def configure_logging(level: Optional[str] = None, fmt: Optional[str] = None) -> None:
    """Configure stdlib logging and structlog once per process.

    Logs go to stderr; stdout is reserved for CSV/JSON results.
    """
    global _configured

    settings = get_settings()
    level = (level or settings.log_level).upper()
    fmt = fmt or settings.log_format

    logging.basicConfig(stream=sys.stderr, format="%(message)s", level=level, force=True)

    renderer = (
        structlog.dev.ConsoleRenderer(colors=False)
        if fmt == "console"
        else structlog.processors.JSONRenderer(sort_keys=True)
    )

    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
    _configured = True


def get_logger(name: str) -> structlog.stdlib.BoundLogger:
    """Logger bound to `name`; configures logging on first use."""
    if not _configured:
        configure_logging()
    return structlog.get_logger(name)


class PerformanceLogger:
    """Context manager for logging how long an operation took"""

    def __init__(self, logger: structlog.stdlib.BoundLogger, operation: str, **fields):
        self.logger = logger
        self.operation = operation
        self.fields = fields
        self.start_time: Optional[float] = None
        self.duration: Optional[float] = None

    def __enter__(self):
        self.start_time = time.perf_counter()
        self.logger.info("operation started", operation=self.operation, **self.fields)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.duration = time.perf_counter() - self.start_time

        if exc_type is None:
            self.logger.info(
                "operation finished",
                operation=self.operation,
                duration_seconds=round(self.duration, 6),
                success=True,
                **self.fields,
            )
        else:
            self.logger.error(
                "operation failed",
                operation=self.operation,
                duration_seconds=round(self.duration, 6),
                success=False,
                error=str(exc_val),
                **self.fields,
            )

        return False
