"""Exception hierarchy shared across the toolkit.

The three bases map onto the CLI exit-code contract: configuration and
usage problems exit 1, bad input data exits 2, scorer-backend failures
exit 3.
"""
from __future__ import annotations


class CurevalError(Exception):
    exit_code = 2


class ConfigError(CurevalError):
    """Invalid configuration, detected before any input is consumed."""
    exit_code = 1


class DataError(CurevalError):
    """Malformed or inconsistent input data."""
    exit_code = 2


class BackendError(CurevalError):
    """Scorer backend failed after exhausting the retry policy."""
    exit_code = 3
