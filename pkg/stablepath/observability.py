"""
Logging and Tracing Configuration
=================================
Structured logging (structlog over stdlib logging) and OpenTelemetry spans
for the long-running operations: training, grid search, routing runs and
CLI commands.

Only the OpenTelemetry API is used here. Spans are no-ops unless the host
application installs an SDK tracer provider.
"""

import logging
import sys
import time
from typing import Any, Optional

import structlog
from opentelemetry import trace

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

logger = structlog.get_logger(__name__)

_configured = False


def configure_logging(verbose: bool = False, level: Optional[int] = None) -> None:
    """Route structlog events through stdlib logging on stderr."""
    global _configured

    if level is None:
        level = logging.DEBUG if verbose else logging.INFO

    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)

    if not _configured:
        structlog.configure(
            processors=[
                structlog.stdlib.filter_by_level,
                structlog.stdlib.add_logger_name,
                structlog.stdlib.add_log_level,
                structlog.processors.TimeStamper(fmt="iso"),
                structlog.processors.StackInfoRenderer(),
                structlog.processors.format_exc_info,
                structlog.processors.KeyValueRenderer(key_order=["event"], sort_keys=True),
            ],
            logger_factory=structlog.stdlib.LoggerFactory(),
            wrapper_class=structlog.stdlib.BoundLogger,
            cache_logger_on_first_use=True,
        )
        _configured = True

    logging.getLogger().setLevel(level)


def get_tracer() -> trace.Tracer:
    return trace.get_tracer("stablepath")


class trace_operation:
    """Context manager for tracing operations."""

    def __init__(self, name: str, **attributes: Any):
        self.name = name
        self.attributes = {k: v for k, v in attributes.items() if v is not None}
        self._span_cm = None
        self.span = None
        self.start_time = 0.0

    def __enter__(self):
        self.start_time = time.perf_counter()
        self._span_cm = get_tracer().start_as_current_span(self.name)
        self.span = self._span_cm.__enter__()

        for key, value in self.attributes.items():
            if isinstance(value, (str, bool, int, float)):
                self.span.set_attribute(key, value)
            else:
                self.span.set_attribute(key, str(value))

        logger.debug("operation_started", operation=self.name, **self.attributes)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        duration = time.perf_counter() - self.start_time

        if exc_type:
            self.span.set_status(trace.Status(trace.StatusCode.ERROR, str(exc_val)))
            self.span.record_exception(exc_val)
            logger.warning(
                "operation_failed",
                operation=self.name,
                duration_s=round(duration, 6),
                error=exc_type.__name__,
            )
        else:
            self.span.set_status(trace.Status(trace.StatusCode.OK))
            logger.info("operation_completed", operation=self.name, duration_s=round(duration, 6))

        self._span_cm.__exit__(exc_type, exc_val, exc_tb)
        return False  # Don't suppress exceptions
