"""structlog setup for the CLI and the pipeline.

Every module logs through ``get_logger(__name__)``; events are snake_case
names with key/value context. Runs and stages bind ``run_id`` / ``stage``
through contextvars, so events emitted deep inside the receive chain still
say which run and stage produced them.
"""

from __future__ import annotations

import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, List, Optional

import structlog

# Third-party loggers that are chatty at DEBUG.
QUIET_LOGGERS = ("sqlalchemy.engine", "sqlalchemy.pool", "numexpr")

_TIMESTAMP = structlog.processors.TimeStamper(fmt="iso", utc=True)


def _formatter(json_logs: bool) -> logging.Formatter:
    renderer: Any = (
        structlog.processors.JSONRenderer(sort_keys=True)
        if json_logs
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    return structlog.stdlib.ProcessorFormatter(
        processor=renderer,
        foreign_pre_chain=[structlog.stdlib.add_log_level, _TIMESTAMP],
    )


def _handlers(log_file: Optional[Path], console: bool) -> List[logging.Handler]:
    handlers: List[logging.Handler] = []
    if console:
        # stdout carries results
        handlers.append(logging.StreamHandler(sys.stderr))
    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, mode="w", encoding="utf-8"))
    return handlers


def configure_logging(
    level: str = "INFO",
    log_file: Optional[Path] = None,
    console: bool = True,
    json_logs: bool = True,
) -> None:
    """Route structlog through the stdlib root logger.

    Args:
        level: DEBUG, INFO, WARNING or ERROR; unknown names fall back to INFO.
        log_file: Rewritten on every call when given.
        console: Also log to stderr.
        json_logs: JSON lines instead of the key=value console layout.
    """
    log_level = getattr(logging, level.upper(), logging.INFO)
    formatter = _formatter(json_logs)

    root = logging.getLogger()
    root.setLevel(log_level)
    for handler in list(root.handlers):
        root.removeHandler(handler)
        if isinstance(handler, logging.FileHandler):
            handler.close()
    for handler in _handlers(log_file, console):
        handler.setLevel(log_level)
        handler.setFormatter(formatter)
        root.addHandler(handler)
    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(max(log_level, logging.WARNING))

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.stdlib.add_log_level,
            structlog.stdlib.add_logger_name,
            _TIMESTAMP,
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.stdlib.ProcessorFormatter.wrap_for_formatter,
        ],
        wrapper_class=structlog.stdlib.BoundLogger,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        # tests reconfigure between runs
        cache_logger_on_first_use=False,
    )


def get_logger(name: str) -> "structlog.stdlib.BoundLogger":
    return structlog.get_logger(name)


def bind_run_context(**kwargs: Any) -> None:
    """Attach fields (run_id, stage, ...) to every following event."""
    structlog.contextvars.bind_contextvars(**kwargs)


def clear_run_context() -> None:
    structlog.contextvars.clear_contextvars()


@contextmanager
def run_context(**kwargs: Any) -> Iterator[None]:
    """Bind fields for the duration of a block, restoring previous values after."""
    with structlog.contextvars.bound_contextvars(**kwargs):
        yield
