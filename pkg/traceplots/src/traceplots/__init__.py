"""Figures from dualray trace CSVs and summary tables."""

from .bits import plot_bits
from .convergence import FigureSpec, plot_convergence

__version__ = "0.1.0"

__all__ = ["FigureSpec", "plot_bits", "plot_convergence"]
