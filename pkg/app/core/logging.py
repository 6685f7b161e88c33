"""
Logging configuration: structlog over stdlib logging, coloured console output and
optional JSON log files.
"""

import logging
import sys
from pathlib import Path
from typing import Any, Optional

import structlog
from pythonjsonlogger import jsonlogger

from .config import Settings, settings


class ColoredFormatter(logging.Formatter):
    """Colored formatter for console output."""

    COLORS = {
        'DEBUG': '\033[36m',    # Cyan
        'INFO': '\033[32m',     # Green
        'WARNING': '\033[33m',  # Yellow
        'ERROR': '\033[31m',    # Red
        'CRITICAL': '\033[35m', # Magenta
        'RESET': '\033[0m'      # Reset
    }

    def format(self, record: logging.LogRecord) -> str:
        color = self.COLORS.get(record.levelname, self.COLORS['RESET'])
        record = logging.makeLogRecord(record.__dict__)
        record.levelname = f"{color}{record.levelname}{self.COLORS['RESET']}"
        return super().format(record)


def setup_log_directory(log_dir: Path) -> Path:
    """Create the log directory and return it."""
    log_dir.mkdir(parents=True, exist_ok=True)
    return log_dir


def create_file_handler(log_dir: Path, log_file: str, level: str = "INFO") -> logging.FileHandler:
    """Create a file handler with JSON formatting."""
    handler = logging.FileHandler(setup_log_directory(log_dir) / log_file, encoding='utf-8')
    handler.setLevel(getattr(logging, level))

    json_formatter = jsonlogger.JsonFormatter(
        fmt='%(asctime)s %(name)s %(levelname)s %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    handler.setFormatter(json_formatter)
    return handler


def create_console_handler(level: str = "INFO") -> logging.StreamHandler:
    """Console handler on stderr so stdout stays free for command output."""
    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(getattr(logging, level))

    console_format = "%(asctime)s | %(levelname)-8s | %(name)-28s | %(message)s"
    handler.setFormatter(ColoredFormatter(console_format, datefmt='%H:%M:%S'))
    return handler


def configure_logging(config: Optional[Settings] = None, level: Optional[str] = None) -> None:
    """Configure application logging; safe to call more than once."""
    config = config or settings
    level = (level or config.log_level).upper()

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
            structlog.processors.JSONRenderer(sort_keys=True),
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, level))
    root_logger.handlers.clear()
    root_logger.addHandler(create_console_handler(level))

    if config.log_to_file:
        if config.debug:
            root_logger.addHandler(create_file_handler(config.log_dir, "debug.log", "DEBUG"))
        root_logger.addHandler(create_file_handler(config.log_dir, "app.log", level))
        root_logger.addHandler(create_file_handler(config.log_dir, "error.log", "ERROR"))

    get_logger(__name__).debug(
        "Logging system initialized",
        log_level=level,
        debug_mode=config.debug,
        log_to_file=config.log_to_file,
    )


def get_logger(name: str) -> structlog.stdlib.BoundLogger:
    """Get a structured logger instance."""
    return structlog.get_logger(name)


def log_file_operation(operation: str, path: Path | str, **kwargs: Any) -> None:
    """Log dataset / artifact file operations."""
    logger = get_logger("io")
    logger.debug(f"File {operation}", operation=operation, path=str(path), **kwargs)


def log_performance(operation: str, duration_ms: float, **kwargs: Any) -> None:
    """Log performance metrics."""
    logger = get_logger("performance")
    logger.info(
        f"Performance: {operation}",
        operation=operation,
        duration_ms=round(duration_ms, 3),
        **kwargs
    )


# Until configure_logging runs, events go through stdlib logging (WARNING and up, stderr).
structlog.configure(
    processors=[
        structlog.stdlib.filter_by_level,
        structlog.stdlib.add_logger_name,
        structlog.stdlib.add_log_level,
        structlog.processors.JSONRenderer(sort_keys=True),
    ],
    logger_factory=structlog.stdlib.LoggerFactory(),
    wrapper_class=structlog.stdlib.BoundLogger,
)
