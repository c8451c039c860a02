"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value or unparseable config file."""


class FormatError(ValueError):
    """Malformed input file; message names the offending byte offset."""


class InsufficientDataError(ValueError):
    """Operation needs more input samples than were provided."""
