"""
Logging configuration for the DTRformer engine.

Console output is colored in debug mode and JSON lines otherwise. A training
run can additionally mirror every event, always as JSON, into ``run.log`` in
its artifact directory so the log travels with the checkpoint.
"""

import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Optional, Union

import structlog

from app.core.config import settings

RUN_LOG_NAME = "run.log"

# third-party loggers that would otherwise flood training output at INFO
QUIET_LOGGERS = ("matplotlib", "numba", "networkx", "sklearn")


def _shared_processors() -> list[Any]:
    return [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.StackInfoRenderer(),
        structlog.processors.UnicodeDecoder(),
    ]


def _formatter(renderer: Any, foreign: list[Any]) -> structlog.stdlib.ProcessorFormatter:
    return structlog.stdlib.ProcessorFormatter(
        foreign_pre_chain=foreign,
        processors=[
            structlog.stdlib.ProcessorFormatter.remove_processors_meta,
            renderer,
        ],
    )


def setup_logging(log_file: Optional[Union[str, Path]] = None) -> None:
    """
    Configure structlog and the root logger; safe to call repeatedly.

    Args:
        log_file: optional path that receives a JSON copy of every event
    """
    log_level = getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)
    shared = _shared_processors()
    json_chain = [*shared, structlog.processors.format_exc_info]

    if settings.DEBUG:
        console = _formatter(structlog.dev.ConsoleRenderer(colors=True), shared)
    else:
        console = _formatter(structlog.processors.JSONRenderer(), json_chain)

    structlog.configure(
        processors=[
            *(shared if settings.DEBUG else json_chain),
            structlog.stdlib.ProcessorFormatter.wrap_for_formatter,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    root_logger = logging.getLogger()
    for handler in root_logger.handlers:
        handler.close()
    root_logger.handlers.clear()
    root_logger.setLevel(log_level)

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(console)
    root_logger.addHandler(console_handler)

    if log_file is not None:
        path = Path(log_file)
        path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(path, encoding="utf-8")
        file_handler.setFormatter(_formatter(structlog.processors.JSONRenderer(), json_chain))
        root_logger.addHandler(file_handler)

    for logger_name in QUIET_LOGGERS:
        logging.getLogger(logger_name).setLevel(logging.WARNING)

    structlog.get_logger(__name__).debug(
        "logging_configured",
        mode="development" if settings.DEBUG else "production",
        log_file=str(log_file) if log_file is not None else None,
    )


@contextmanager
def run_context(**fields: Any) -> Iterator[None]:
    """Attach ``fields`` (command, seed, out_dir, ...) to every event logged inside the block."""
    with structlog.contextvars.bound_contextvars(**fields):
        yield


def get_logger(name: str) -> logging.Logger:
    """
    Stdlib logger routed through the structlog formatter.

    Modules use this for %-style messages; key-value events go through
    ``structlog.get_logger()``.
    """
    return logging.getLogger(name)
