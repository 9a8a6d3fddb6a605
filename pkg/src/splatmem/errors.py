"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates an operation's documented precondition."""


class ConfigError(Exception):
    """A run configuration is malformed or references missing resources."""


class FormatError(Exception):
    """A binary artifact has a bad magic, version, or truncated payload."""


class InvariantError(Exception):
    """An internal consistency check failed; indicates a bug, not bad input."""
