"""Figure rendering for the matrix completion experiment CSVs."""

from .render import (
    AXIS_LABELS,
    EmptySelectionError,
    FigureSpec,
    KINDS,
    SchemaError,
    phase_fractions,
    render,
)

__version__ = "0.1.0"
