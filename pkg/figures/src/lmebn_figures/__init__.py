"""Figure rendering for the grouped network-learning results CSV."""

from .render import FIGURE_IDS, SchemaError, build_figure, load_results, render_figures

__all__ = ["FIGURE_IDS", "SchemaError", "build_figure", "load_results", "render_figures"]
