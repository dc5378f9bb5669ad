"""Exception hierarchy shared by all regiolex modules.

The CLI maps these onto process exit codes: ConfigError -> 2,
InputError -> 3, NumericError -> 4.
"""


class RegiolexError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(RegiolexError):
    """Invalid configuration value or malformed config file."""

    exit_code = 2


class InputError(RegiolexError):
    """Missing, unreadable, or malformed input data."""

    exit_code = 3


class NumericError(RegiolexError):
    """Degenerate or failed numerical computation."""

    exit_code = 4
