"""Convergence-plot companion package.

Consumes study CSV files (and optional JSON sidecars) produced by the
solver CLI and renders log-log error plots with least-squares slope
annotations and reference guide lines.
"""

__version__ = "0.1.0"

from .core import CsvFormatError, StudyCurve, fit_slope, plot_convergence, read_study_csv

__all__ = [
    "CsvFormatError",
    "StudyCurve",
    "fit_slope",
    "plot_convergence",
    "read_study_csv",
    "__version__",
]
