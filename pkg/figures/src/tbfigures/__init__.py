"""Figure rendering for transportable-experiment sweep results."""

from .render import FigureSpec, SchemaError, load_results, render

__version__ = "0.1.0"
