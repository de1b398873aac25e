"""Offline figure rendering for cdma-lab CSV outputs."""

from .figures import FigureSpec, KINDS, PlotError, build_figure, render

__all__ = ["FigureSpec", "KINDS", "PlotError", "build_figure", "render"]
