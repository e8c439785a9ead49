import logging
import sys
import traceback
from datetime import datetime
from pathlib import Path

import structlog

from config.settings import settings

_configured = False


def configure_logging(level: str | None = None, to_file: bool = True) -> None:
    """Route structlog through stdlib logging: dated file in LOG_DIR plus stderr.

    stdout is reserved for command output (tables, CSV), so the stream handler
    writes to stderr.
    """
    global _configured
    if _configured:
        return
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if to_file:
        log_dir = Path(settings.log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(
            logging.FileHandler(
                log_dir / f"aptlab-{datetime.now().strftime('%Y-%m-%d')}.log",
                encoding="utf-8",
            )
        )
    logging.basicConfig(
        level=getattr(logging, (level or settings.log_level).upper(), logging.INFO),
        format="%(message)s",
        handlers=handlers,
    )
    renderer = (
        structlog.processors.JSONRenderer()
        if settings.log_format == "json"
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            renderer,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
    _configured = True


def get_logger(name: str) -> structlog.stdlib.BoundLogger:
    return structlog.get_logger(name)


def log_exception(logger: structlog.stdlib.BoundLogger, context: str, exc: Exception) -> str:
    """Log full exception with traceback. Returns formatted error string."""
    tb = traceback.format_exc()
    error_msg = f"{context}: {type(exc).__name__}: {exc}"
    logger.error(error_msg, traceback=tb)
    return error_msg


def log_warning(logger: structlog.stdlib.BoundLogger, context: str, message: str) -> None:
    logger.warning(f"{context}: {message}")
