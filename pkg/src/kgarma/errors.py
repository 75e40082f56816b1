"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class KgarmaError(Exception):
    """Base class for all library errors."""


class DataError(KgarmaError, ValueError):
    """Malformed, incomplete or otherwise unusable input data."""


class ModelError(KgarmaError, ValueError):
    """Invalid model parameters (non-stationary, non-invertible, out of range)."""


class ConvergenceError(KgarmaError, RuntimeError):
    """An optimizer or numerical routine failed to produce a usable result."""
