"""Exception hierarchy shared by all modules.

Each class marks one failure category so callers (and the CLI exit-code
mapping) can tell misuse of an operation apart from bad input files or an
invalid experiment configuration.
"""


class PfclError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(PfclError):
    """Operands have incompatible shapes for the requested operation."""


class DomainError(PfclError):
    """An argument value lies outside the operation's domain."""


class FormatError(PfclError):
    """An input file is malformed or inconsistent."""


class ConfigError(PfclError):
    """An experiment configuration is invalid or self-contradictory."""
