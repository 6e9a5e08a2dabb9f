"""Exception taxonomy shared across the package.

Each class corresponds to one failure category surfaced by the CLI exit
codes: usage problems are argparse's domain, DataError maps to exit 2,
NumericError to exit 3.
"""


class SensorcapError(Exception):
    """Base class for all package errors."""


class DimensionError(SensorcapError):
    """Tensor or sequence shapes do not satisfy an operation's contract."""


class DataError(SensorcapError):
    """Malformed dataset records, captions, or incompatible corpora."""


class ConfigError(SensorcapError):
    """Invalid configuration value (unknown mode, rate outside [0, 1], ...)."""


class NumericError(SensorcapError):
    """Non-finite values where finite ones are required."""


class ContractError(SensorcapError):
    """A caller-supplied callable violated its stated contract."""
