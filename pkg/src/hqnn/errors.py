"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: configuration problems exit 2,
dataset problems exit 3, training aborts exit 4.
"""


class HqnnError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HqnnError):
    """Invalid configuration value, option combination, or out-of-range request."""


class StructureError(HqnnError):
    """Inconsistent circuit/tensor structure: bad indices, shape mismatches."""


class EncodingError(HqnnError):
    """Classical features cannot be loaded into a quantum state."""


class DataError(HqnnError):
    """Dataset file problems (malformed, truncated, inconsistent)."""


class TrainingError(HqnnError):
    """Training cannot continue (non-finite loss or gradients)."""
