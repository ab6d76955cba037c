"""Instrumented common confounding: bridge-function estimators, population oracles and a Monte Carlo harness."""
from .data import ContrastSpec, Dataset, VariableRole, ate_contrast, grid_contrast, load_csv
from .errors import ICCError, IdentificationError, SupportError
from .estimators import EstimateReport

__version__ = "0.1.0"

__all__ = [
    "ContrastSpec", "Dataset", "EstimateReport", "ICCError", "IdentificationError", "SupportError",
    "VariableRole", "ate_contrast", "grid_contrast", "load_csv", "__version__",
]
