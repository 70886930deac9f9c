"""Shared exception types, mapped onto CLI exit codes by the harness."""


class ConfigError(ValueError):
    """Invalid configuration document or command arguments (exit code 2)."""


class DivergenceError(RuntimeError):
    """A numerical routine diverged or failed to converge (exit code 3)."""


class FormatError(ValueError):
    """A file failed structural validation: bad magic, version, or length
    (exit code 4)."""
