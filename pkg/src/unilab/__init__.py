"""Alignment/uniformity laboratory for global and local contrastive losses."""

from .errors import (
    ConfigError, DegenerateVectorError, DimensionError, DivergenceError, EmptyBatchError,
    EvaluationError, LabError, PreconditionError, UnsupportedOperationError,
)
from .numeric import RaggedBatch

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DegenerateVectorError", "DimensionError", "DivergenceError",
    "EmptyBatchError", "EvaluationError", "LabError", "PreconditionError",
    "UnsupportedOperationError", "RaggedBatch",
]
