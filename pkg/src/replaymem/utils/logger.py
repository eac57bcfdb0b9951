"""Logging utility for replaymem.

Structured logging with context managers for sections, indentation and the
run a message belongs to. Sweep workers log concurrently, so every line written
inside ``run_context`` carries the run id.
"""

from collections.abc import Generator
from contextlib import contextmanager
import logging
import os
import sys
from typing import Any, Self


class ReplayLogger:
    """Logger for replaymem runs with sections, indentation and run-scoped prefixes.

    Wraps a ``logging.Logger`` and only logs when REPLAYMEM_ENABLED is set and
    the message clears REPLAYMEM_LOG_LEVEL. Messages accept ``%``-style args
    like the standard library.

    Environment Variables:
        REPLAYMEM_ENABLED: Set to '1', 'true', or 'yes' to enable logging
        REPLAYMEM_LOG_LEVEL: Set to DEBUG, INFO, WARNING, ERROR, or CRITICAL (default: ERROR)
    """

    def __init__(self, name: str = "replaymem", enabled: bool | None = None, level: str | None = None) -> None:
        """Initialize the logger.

        Args:
            name: Logger name
            enabled: Force logging on or off, overriding REPLAYMEM_ENABLED
            level: Force a level name, overriding REPLAYMEM_LOG_LEVEL
        """
        self._logger = logging.getLogger(name)

        if enabled is None:
            enabled = os.environ.get("REPLAYMEM_ENABLED", "").lower() in ("1", "true", "yes")
        self._enabled = enabled

        level_name = (level or os.environ.get("REPLAYMEM_LOG_LEVEL", "ERROR")).upper()
        level_value = getattr(logging, level_name, logging.ERROR)
        self._logger.setLevel(level_value)

        if self._enabled:
            self._logger.handlers.clear()

            handler = logging.StreamHandler(sys.stdout)
            handler.setLevel(level_value)
            self._logger.addHandler(handler)

            # Prevent propagation to root logger to avoid duplicate messages
            self._logger.propagate = False

        self._indent_level = 0
        self._indent_char = "  "
        self._runs: list[str] = []

    @property
    def enabled(self) -> bool:
        return self._enabled

    @property
    def run_id(self) -> str | None:
        return self._runs[-1] if self._runs else None

    def _log_with_indent(self, level: int, message: str, *args: Any) -> None:
        if not (self._enabled and self._logger.isEnabledFor(level)):
            return
        if args:
            message = message % args
        prefix = f"[{self._runs[-1]}] " if self._runs else ""
        indent = self._indent_char * self._indent_level
        self._logger.log(level, f"{prefix}{indent}{message}")

    def info(self, message: str, *args: Any) -> None:
        self._log_with_indent(logging.INFO, message, *args)

    def success(self, message: str, *args: Any) -> None:
        self._log_with_indent(logging.INFO, f"[SUCCESS] {message}", *args)

    def warning(self, message: str, *args: Any) -> None:
        self._log_with_indent(logging.WARNING, f"[WARNING] {message}", *args)

    def error(self, message: str, *args: Any) -> None:
        self._log_with_indent(logging.ERROR, f"[ERROR] {message}", *args)

    def debug(self, message: str, *args: Any) -> None:
        self._log_with_indent(logging.DEBUG, f"[DEBUG] {message}", *args)

    def separator(self, char: str = "-", length: int = 70) -> None:
        """Print a separator line."""
        self._log_with_indent(logging.INFO, char * length)

    @contextmanager
    def section(self, title: str, char: str = "=", length: int = 70) -> Generator[Self, Any, None]:
        """Context manager for a section with separator formatting.

        Usage:
            with logger.section("Run order-i/reservoir"):
                logger.info("Content here")

        Args:
            title: Section title
            char: Character for separators
            length: Length of separator line
        """
        if self._enabled and self._logger.isEnabledFor(logging.INFO):
            self._log_with_indent(logging.INFO, char * length)
            self._log_with_indent(logging.INFO, title)
            self._log_with_indent(logging.INFO, char * length)

        try:
            yield self
        finally:
            if self._enabled and self._logger.isEnabledFor(logging.INFO):
                self._log_with_indent(logging.INFO, "")

    @contextmanager
    def subsection(self, title: str, char: str = "-", length: int = 70) -> Generator[Self, Any, None]:
        """Context manager for a subsection with separator formatting.

        Args:
            title: Subsection title
            char: Character for separators
            length: Length of separator line
        """
        if self._enabled and self._logger.isEnabledFor(logging.INFO):
            self._log_with_indent(logging.INFO, title)
            self._log_with_indent(logging.INFO, char * length)

        try:
            yield self
        finally:
            if self._enabled and self._logger.isEnabledFor(logging.INFO):
                self._log_with_indent(logging.INFO, "")

    @contextmanager
    def run_context(self, run_id: str) -> Generator[Self, Any, None]:
        """Prefix every message logged inside the block with ``[run_id]``.

        Nested contexts use the innermost run id.
        """
        self._runs.append(run_id)
        try:
            yield self
        finally:
            self._runs.pop()

    @contextmanager
    def indent(self, levels: int = 1) -> Generator[Self, Any, None]:
        """Context manager to indent output.

        Args:
            levels: Number of indentation levels to add
        """
        self._indent_level += levels
        try:
            yield self
        finally:
            self._indent_level -= levels

    def blank(self, count: int = 1) -> None:
        """Print blank lines."""
        for _ in range(count):
            self._log_with_indent(logging.INFO, "")


_default_logger: ReplayLogger | None = None


def get_logger() -> ReplayLogger:
    """Get the default logger instance, creating it if necessary.

    Returns:
        ReplayLogger instance
    """
    global _default_logger
    if _default_logger is None:
        _default_logger = ReplayLogger()
    return _default_logger


def set_logger(logger: ReplayLogger) -> None:
    """Set the default logger instance.

    Args:
        logger: Logger instance to use as default
    """
    global _default_logger
    _default_logger = logger


def reset_logger() -> None:
    """Reset the default logger instance."""
    global _default_logger
    _default_logger = None
