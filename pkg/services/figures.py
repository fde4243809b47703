"""
Figure data as CSV frames. Plotting is left to external tools; each frame carries the
columns a plot of the corresponding panel needs.
"""
import numpy as np
import pandas as pd

from models.schemas import SampledFunction, TrainHistory
from services.spline import Spline, evaluate

FIGURE_COLUMNS = ["t", "f", "s", "residual"]
HISTORY_COLUMNS = ["epoch", "loss"]


def figure_frame(data: SampledFunction, spline: Spline) -> pd.DataFrame:
    """Function, approximation and residual s - f on the data grid."""
    t = np.asarray(data.t, dtype=float)
    f = np.asarray(data.f, dtype=float)
    s = np.asarray(evaluate(spline, t), dtype=float)
    return pd.DataFrame({"t": t, "f": f, "s": s, "residual": s - f}, columns=FIGURE_COLUMNS)


def history_frame(history: TrainHistory) -> pd.DataFrame:
    losses = history.loss_per_epoch
    return pd.DataFrame({"epoch": np.arange(1, len(losses) + 1), "loss": losses}, columns=HISTORY_COLUMNS)
