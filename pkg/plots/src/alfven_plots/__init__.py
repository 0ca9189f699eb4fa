"""Scaling figures for study CSV tables.

This package consumes the on-disk artifacts of the simulation suite —
the study CSV schema and the report JSON — and renders log–log scaling
figures with independently fitted slope annotations.  It deliberately
has no dependency on the simulation package itself: the file formats
are the contract.
"""

from .fitting import PowerFit, fit_powerlaw, read_records
from .figures import PlotSpec, plot_scaling

__all__ = [
    "PowerFit",
    "PlotSpec",
    "fit_powerlaw",
    "plot_scaling",
    "read_records",
]
