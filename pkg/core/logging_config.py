import json
import logging
import os
from logging.handlers import RotatingFileHandler
from typing import Optional

# numeric libraries log at DEBUG when the root logger does; keep them quiet
NOISY_LOGGERS = ("PIL", "matplotlib")

CONTEXT_FIELDS = ("command", "seed")


class RunContextFilter(logging.Filter):
    """Stamps the running seqmem command and seed onto every record a handler emits."""

    def __init__(self, command: str = "-", seed: Optional[int] = None):
        super().__init__()
        self.command = command
        self.seed = "-" if seed is None else str(seed)

    def filter(self, record: logging.LogRecord) -> bool:
        if not hasattr(record, "command"):
            record.command = self.command
        if not hasattr(record, "seed"):
            record.seed = self.seed
        return True


def _build_json_formatter() -> logging.Formatter:
    try:
        from pythonjsonlogger import jsonlogger
    except ImportError:
        return logging.Formatter(
            json.dumps(
                {
                    "timestamp": "%(asctime)s",
                    "level": "%(levelname)s",
                    "name": "%(name)s",
                    "command": "%(command)s",
                    "seed": "%(seed)s",
                    "message": "%(message)s",
                }
            )
        )

    return jsonlogger.JsonFormatter("%(asctime)s %(levelname)s %(name)s %(command)s %(seed)s %(message)s")


def _build_plain_formatter() -> logging.Formatter:
    return logging.Formatter("%(asctime)s %(levelname)s [%(command)s seed=%(seed)s] %(name)s - %(message)s")


def configure_logging(
    *,
    log_level: str = "INFO",
    log_format: str = "plain",
    log_file: Optional[str] = None,
    console: bool = True,
    command: str = "-",
    seed: Optional[int] = None,
) -> None:
    """
    Configures the root logger for a seqmem process.

    Handlers write to stderr (stdout carries the key=value result lines) and,
    when `log_file` is set, to a rotating file. Calling it again replaces the
    previous handlers.

    Args:
        log_level: Level name (DEBUG, INFO, ...). Unknown names fall back to INFO.
        log_format: "plain" or "json".
        log_file: Optional path of a rotating log file (e.g. "logs/seqmem.log").
        console: Also log to stderr.
        command: Command name stamped on every record.
        seed: Run seed stamped on every record, if known.
    """
    level = getattr(logging, log_level.upper(), logging.INFO)
    formatter = _build_json_formatter() if log_format.lower() == "json" else _build_plain_formatter()
    context = RunContextFilter(command, seed)

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    root_logger.handlers.clear()

    handlers = []
    if log_file:
        os.makedirs(os.path.dirname(log_file) or ".", exist_ok=True)
        handlers.append(RotatingFileHandler(log_file, maxBytes=10 * 1024 * 1024, backupCount=5))
    if console:
        handlers.append(logging.StreamHandler())

    for handler in handlers:
        handler.setFormatter(formatter)
        handler.addFilter(context)
        root_logger.addHandler(handler)

    for name in NOISY_LOGGERS:
        logging.getLogger(name).setLevel(max(level, logging.WARNING))


def configure_from_args(args) -> None:
    """Applies the --log-* flags of a parsed seqmem command line."""
    configure_logging(
        log_level=getattr(args, "log_level", None) or os.getenv("LOG_LEVEL", "INFO"),
        log_format=getattr(args, "log_format", None) or "plain",
        log_file=getattr(args, "log_file", None),
        console=True,
        command=getattr(args, "command", None) or "-",
        seed=getattr(args, "seed", None),
    )
