"""Figures rendered from kmfl harness CSVs."""

__version__ = "0.1.0"

from .plots import build_comparison, build_nfit, build_traces, render  # noqa: F401
from .spec import FigureError, FigureSpec, load_spec  # noqa: F401
