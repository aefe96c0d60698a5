class QeForgeError(Exception):
    """Base class for all errors raised by qeforge."""


class ConfigError(QeForgeError):
    """Bad input or configuration (CLI exit code 1)."""


class InvariantError(QeForgeError):
    """An internal consistency check failed (CLI exit code 2)."""


class LineError(QeForgeError):
    """A single input line could not be processed; callers may skip it."""

    def __init__(self, message, line_no=None):
        super().__init__(message if line_no is None else f"line {line_no}: {message}")
        self.line_no = line_no


class BackendError(QeForgeError):
    """A translation backend failed after exhausting its retries."""
