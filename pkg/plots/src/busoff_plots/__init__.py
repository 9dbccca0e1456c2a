"""Post-hoc figures from busoff CSV outputs; never recomputes dynamics."""

from .render import FigureSpec, render, sample_csv_path

__version__ = "0.1.0"

__all__ = ["FigureSpec", "render", "sample_csv_path", "__version__"]
