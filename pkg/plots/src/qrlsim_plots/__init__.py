"""Figure rendering for qrlsim CSV output."""

from .io import Curve, SchemaError, read_curve, read_history
from .render import render_history_bars, render_learning_curves

__version__ = "0.1.0"
