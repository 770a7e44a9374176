"""Seeded synthetic series for the test suite.

Shapes mimic the production data: a strongly seasonal weekly level series
with an autoregressive seasonally adjusted part, and search-volume-like
panels derived from the target with noise.
"""

from __future__ import annotations

import datetime as dt

import numpy as np

from prism.series import ExogenousPanel, WeeklySeries, WeekStamp

START = WeekStamp(dt.date(2000, 1, 1))


def seasonal_ar_series(
    n: int,
    seed: int,
    *,
    level: float = 350_000.0,
    season_amp: float = 80_000.0,
    ar: float = 0.97,
    sigma: float = 6_000.0,
    drift: float = 0.0,
    start: WeekStamp = START,
) -> WeeklySeries:
    """Seasonal cycle + AR(1) seasonally adjusted part + optional drift."""
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    phase = 2.0 * np.pi * (t % 52) / 52.0
    seasonal = season_amp * (np.sin(phase) + 0.45 * np.sin(2.0 * phase + 1.0))
    z = np.empty(n)
    z[0] = 0.0
    shocks = rng.normal(0.0, sigma, size=n)
    for i in range(1, n):
        z[i] = ar * z[i - 1] + shocks[i]
    return WeeklySeries(start, level + drift * t + seasonal + z)


def sinusoid_trend_series(n: int, *, amplitude: float = 100.0, slope: float = 0.5,
                          start: WeekStamp = START) -> WeeklySeries:
    t = np.arange(n)
    return WeeklySeries(start, amplitude * np.sin(2.0 * np.pi * t / 52.0) + slope * t)


def noisy_transforms_panel(
    y: WeeklySeries,
    n_terms: int,
    seed: int,
    *,
    noise_scale: float = 0.08,
    batch_id: str = "synthetic",
) -> ExogenousPanel:
    """Terms that are noisy affine transforms of the target, scaled to 0..100."""
    rng = np.random.default_rng(seed)
    v = y.values
    lo, hi = v.min(), v.max()
    base = (v - lo) / (hi - lo if hi > lo else 1.0)
    cols = []
    for _ in range(n_terms):
        gain = rng.uniform(0.6, 1.0)
        offset = rng.uniform(0.0, 0.2)
        noise = rng.normal(0.0, noise_scale, size=len(y))
        col = np.clip(offset + gain * base + noise, 0.0, 1.2)
        col = np.round(100.0 * col / col.max())
        cols.append(col)
    return ExogenousPanel(y.start, [f"term_{i}" for i in range(n_terms)],
                          np.column_stack(cols), batch_id=batch_id)


def poisoned_from(y: WeeklySeries, week: WeekStamp) -> WeeklySeries:
    """Copy of y with every value at or after `week` replaced by NaN."""
    values = y.values.copy()
    if y.contains(week):
        values[week - y.start:] = np.nan
    return WeeklySeries(y.start, values, allow_non_finite=True)
