"""Figure rendering for mfje experiment CSV outputs."""

from .render import FIGURE_KINDS, PlotInputError, render

__all__ = ["FIGURE_KINDS", "PlotInputError", "render"]
__version__ = "0.1.0"
