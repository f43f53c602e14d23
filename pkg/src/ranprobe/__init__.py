import logging
import logging.config
import os
import sys
from pathlib import Path

try:
    from rich.logging import RichHandler  # noqa: F401

    IS_RICH = True
except ImportError:
    IS_RICH = False

from ._version import __version__

FRAMEWORK_VERSION = __version__


def is_interactive():
    if hasattr(sys, "ps1"):  # ps1 should be present for interactive shells
        return True

    try:
        if os.isatty(sys.stderr.fileno()):  # TTY
            return True
    except (AttributeError, ValueError, OSError):
        # pytest and friends swap stderr for objects without a real fd
        return False
    return False


def rich_stderr_handler():
    """RichHandler bound to stderr; rich's default console prints to stdout."""
    from rich.console import Console
    from rich.logging import RichHandler

    return RichHandler(console=Console(stderr=True), rich_tracebacks=True)


def setup_logging(level="INFO", log_file=None):
    """Configure the root logger once per process.

    On a terminal with rich available, records go through rich's handler with
    a short format (rich adds level and time itself). Otherwise a plain
    stderr stream handler writes the detailed format. Command output on stdout
    is never mixed with log records. log_file, when given, receives the
    detailed format too."""
    use_rich = is_interactive() and IS_RICH

    config = {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "rich": {"datefmt": "%H:%M:%S"},
            "detailed": {"format": "%(asctime)s %(levelname)s [%(name)s] %(message)s"},
        },
        "handlers": {
            "console": {
                "class": "logging.StreamHandler",
                "formatter": "detailed",
                "level": level,
                "stream": "ext://sys.stderr",
            },
        },
        "root": {
            "handlers": ["console"],
            "level": level,
        },
    }
    if use_rich:
        config["handlers"]["console"] = {
            "()": "ranprobe.rich_stderr_handler",
            "formatter": "rich",
            "level": level,
        }
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        config["handlers"]["file"] = {
            "class": "logging.FileHandler",
            "filename": str(log_file),
            "formatter": "detailed",
            "level": level,
        }
        config["root"]["handlers"].append("file")

    logging.config.dictConfig(config)
