"""Figure rendering for adiabatic-elimination simulation outputs."""

from .render import FIGURE_KINDS, FigureSpec, SchemaError, read_table, render

__version__ = "0.1.0"
