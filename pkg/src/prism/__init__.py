"""Two-stage forecasting of strongly seasonal weekly series.

Stage 1 splits the target's recent history into seasonal and seasonally
adjusted components as-of each week; Stage 2 regresses future values on the
lagged components (and optional search-volume regressors) with discounted,
L1-penalized least squares. The package also ships the naive baseline, a
rolling-origin backtester, and the evaluation statistics used to compare
forecast tracks.
"""

__version__ = "0.1.0"

from .series import ExogenousPanel, WeeklySeries, WeekStamp, align, week_ending_saturday

__all__ = [
    "ExogenousPanel",
    "WeeklySeries",
    "WeekStamp",
    "align",
    "week_ending_saturday",
    "__version__",
]
