"""Offline figure renderer for the simulation lab's CSV outputs."""

from .figures import KINDS, FigureSpec, render
from .schema import SchemaError

__version__ = "0.1.0"

__all__ = ["FigureSpec", "render", "KINDS", "SchemaError", "__version__"]
