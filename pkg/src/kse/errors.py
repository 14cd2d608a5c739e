"""Exception hierarchy. `exit_code` is the CLI exit-status category."""


class KseError(Exception):
    exit_code = 1


class ConfigError(KseError, ValueError):
    """Invalid parameters, configuration files, or CLI arguments."""

    exit_code = 2


class DataError(KseError, ValueError):
    """Malformed or inconsistent input data (shapes, audio, corpora)."""

    exit_code = 3


class NumericError(KseError, ArithmeticError):
    """Numerical failure: divergence, degenerate spectra, factorization."""

    exit_code = 4


class StorageError(KseError, OSError):
    """File I/O failure, unsupported formats, corrupted model files."""

    exit_code = 5


class MemoryBudgetError(KseError):
    """Dense kernel block exceeds the entry cap; the caller must batch."""

    exit_code = 4
