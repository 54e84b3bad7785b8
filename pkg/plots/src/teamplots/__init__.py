"""Figure rendering for latentteam experiment CSVs.

Reads only the versioned CSV files the experiment harness emits and turns
them into raster figures; no numerical work beyond grouping and averaging
already-logged values.
"""

import matplotlib

matplotlib.use("Agg")

from .figures import FIGURE_KINDS, FigureSpec, SchemaError, render

__all__ = ["FIGURE_KINDS", "FigureSpec", "SchemaError", "render"]
