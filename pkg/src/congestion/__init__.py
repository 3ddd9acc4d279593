"""Intersection congestion pipeline: ingest trip records, engineer
features, impute street names, cluster cities, fit and evaluate regressors
for the p50 stopped time, and export busy-intersection summaries."""

__version__ = "0.1.0"

from . import analysis, cluster, core_data, evaluation, features, impute, ingest, models  # noqa: E402
from ._kernels import available_backends, backend_name, set_backend  # noqa: E402
from .errors import (  # noqa: E402
    CongestionError,
    ConfigError,
    ConvergenceError,
    NumericalError,
    RowError,
    SchemaError,
    SingularMatrixError,
)

__all__ = [
    "__version__", "analysis", "cluster", "core_data", "evaluation", "features", "impute", "ingest", "models",
    "available_backends", "backend_name", "set_backend",
    "CongestionError", "ConfigError", "ConvergenceError", "NumericalError", "RowError", "SchemaError",
    "SingularMatrixError",
]
