"""Exception taxonomy.

Exit-code mapping used by the CLI: ConfigError/DomainError -> 2,
NumericalError -> 3, OSError -> 4.
"""


class ShellrayError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(ShellrayError):
    """Invalid configuration, scene description, or argument combination."""


class DomainError(ShellrayError, ValueError):
    """An operation was called with arguments outside its domain."""


class NumericalError(ShellrayError, ArithmeticError):
    """A numerical method produced non-finite values or failed to converge."""


class MeshError(ShellrayError):
    """A mesh or ray-query invariant was violated (e.g. hit-buffer overflow)."""
