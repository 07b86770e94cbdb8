"""Hybrid quantum-classical neural network laboratory.

Exact statevector simulation of parameterized circuits, analytic
gradient rules, from-scratch classical layers, and two hybrid image
classifiers with a reproducible experiment CLI.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    DataError,
    EncodingError,
    HqnnError,
    StructureError,
    TrainingError,
)

__all__ = [
    "__version__",
    "HqnnError",
    "ConfigurationError",
    "StructureError",
    "EncodingError",
    "DataError",
    "TrainingError",
]
