"""Seasonal/trend decomposition of weekly series.

Two methods behind one result type: an iterated loess decomposition (the
default) and the classical moving-average additive decomposition. Both
split a window into seasonal + trend + remainder with the reconstruction
identity enforced by construction, and both can be evaluated as-of a given
week ("vintage") so no future value ever leaks into an estimate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numba import njit

from .errors import DataError, InsufficientHistory, SeriesTooShort
from .series import WeekStamp, WeeklySeries

PERIODIC = "periodic"

METHOD_STL = "stl"
METHOD_ADDITIVE = "additive"


# ---------------------------------------------------------------------------
# loess
# ---------------------------------------------------------------------------

@njit(cache=True)
def _wls_point(x, y, w, lo, hi, xe, degree):
    """Weighted polynomial fit on x[lo:hi] evaluated at xe.

    Works on x centered at xe so the fitted value is the intercept.
    Falls back to lower degrees when the local design is singular.
    """
    s0 = 0.0
    s1 = 0.0
    s2 = 0.0
    s3 = 0.0
    s4 = 0.0
    t0 = 0.0
    t1 = 0.0
    t2 = 0.0
    for i in range(lo, hi):
        wi = w[i - lo]
        if wi <= 0.0:
            continue
        d = x[i] - xe
        s0 += wi
        s1 += wi * d
        d2 = d * d
        s2 += wi * d2
        s3 += wi * d2 * d
        s4 += wi * d2 * d2
        t0 += wi * y[i]
        t1 += wi * d * y[i]
        t2 += wi * d2 * y[i]
    if s0 <= 0.0:
        return np.nan
    deg = degree
    if deg == 2:
        det = (
            s0 * (s2 * s4 - s3 * s3)
            - s1 * (s1 * s4 - s3 * s2)
            + s2 * (s1 * s3 - s2 * s2)
        )
        scale = s0 * s2 * s4
        if scale > 0.0 and abs(det) > 1e-10 * scale:
            return (
                t0 * (s2 * s4 - s3 * s3)
                - s1 * (t1 * s4 - s3 * t2)
                + s2 * (t1 * s3 - s2 * t2)
            ) / det
        deg = 1
    if deg == 1:
        det = s0 * s2 - s1 * s1
        if s2 > 0.0 and det > 1e-12 * s0 * s2:
            return (s2 * t0 - s1 * t1) / det
    return t0 / s0


@njit(cache=True)
def _loess_eval(x, y, rw, x_eval, window, degree):
    """Tricube-weighted local polynomial regression.

    x must be strictly increasing. The neighborhood of each evaluation
    point is the `window` nearest data points (ties broken toward earlier
    indices); when window exceeds the data size the bandwidth is widened
    by half the deficit, matching the usual seasonal-trend smoother.
    """
    n = x.shape[0]
    m = x_eval.shape[0]
    out = np.empty(m)
    q = window if window < n else n
    pad = 0.0
    if window > n:
        if n > 1:
            pad = 0.5 * (window - n) * (x[n - 1] - x[0]) / (n - 1)
        else:
            pad = 0.5 * (window - n)
    w = np.empty(q)
    for k in range(m):
        xe = x_eval[k]
        lo = np.searchsorted(x, xe) - q
        if lo < 0:
            lo = 0
        if lo > n - q:
            lo = n - q
        hi = lo + q
        while hi < n and (x[hi] - xe) < (xe - x[lo]):
            lo += 1
            hi += 1
        left = xe - x[lo]
        right = x[hi - 1] - xe
        h = (left if left > right else right) + pad
        wsum = 0.0
        for i in range(lo, hi):
            d = abs(x[i] - xe)
            if h > 0.0:
                u = d / h
                if u >= 1.0:
                    wt = 0.0
                else:
                    c = 1.0 - u * u * u
                    wt = c * c * c
            else:
                wt = 1.0
            wt *= rw[i]
            w[i - lo] = wt
            wsum += wt
        if wsum <= 0.0:
            # robustness weights zeroed the whole neighborhood: ignore them
            wsum = 0.0
            for i in range(lo, hi):
                d = abs(x[i] - xe)
                if h > 0.0:
                    u = d / h
                    if u >= 1.0:
                        wt = 0.0
                    else:
                        c = 1.0 - u * u * u
                        wt = c * c * c
                else:
                    wt = 1.0
                w[i - lo] = wt
                wsum += wt
        if wsum <= 0.0:
            # h collapsed onto a zero-weight point; take the nearest value
            out[k] = y[lo] if (xe - x[lo]) <= (x[hi - 1] - xe) else y[hi - 1]
            continue
        out[k] = _wls_point(x, y, w, lo, hi, xe, degree)
    return out


def loess_smooth(y, x_positions, window: int, degree: int, robustness_weights=None) -> np.ndarray:
    """Fitted values of a local weighted polynomial regression at every x.

    The fit at each point uses the `window` nearest neighbors under a
    tricube kernel, multiplied by `robustness_weights` when supplied.
    Singular local designs fall back to lower polynomial degrees.
    """
    y = np.ascontiguousarray(y, dtype=float)
    x = np.ascontiguousarray(x_positions, dtype=float)
    if y.ndim != 1 or x.shape != y.shape:
        raise ValueError("y and x_positions must be equal-length 1-D sequences")
    if y.size == 0:
        raise ValueError("empty input")
    if degree not in (0, 1, 2):
        raise ValueError(f"degree must be 0, 1 or 2, got {degree}")
    window = int(window)
    if window < degree + 1:
        raise ValueError(f"window {window} too small for degree {degree}")
    if np.any(np.diff(x) <= 0):
        raise ValueError("x_positions must be strictly increasing")
    if robustness_weights is None:
        rw = np.ones_like(y)
    else:
        rw = np.ascontiguousarray(robustness_weights, dtype=float)
        if rw.shape != y.shape:
            raise ValueError("robustness_weights length mismatch")
        if np.any(rw < 0):
            raise ValueError("robustness_weights must be nonnegative")
    return _loess_eval(x, y, rw, x, window, degree)


# ---------------------------------------------------------------------------
# configuration / result types
# ---------------------------------------------------------------------------

def _next_odd(x: float) -> int:
    n = int(math.ceil(x))
    return n if n % 2 == 1 else n + 1


def _check_window(name: str, w) -> None:
    if not isinstance(w, (int, np.integer)):
        raise ValueError(f"{name} must be an integer, got {w!r}")
    if w < 3 or w % 2 == 0:
        raise ValueError(f"{name} must be an odd integer >= 3, got {w}")


@dataclass(frozen=True)
class StlConfig:
    """Knobs of the loess decomposition.

    seasonal_window PERIODIC replaces each cycle-subseries by its mean,
    forcing an identical seasonal shape in every cycle. Window defaults
    follow the reference implementation; the robust() constructor enables
    bisquare outer iterations for outlier-heavy series.
    """

    period: int = 52
    seasonal_window: Union[int, str] = PERIODIC
    trend_window: int | None = None
    low_pass_window: int | None = None
    inner_loops: int = 2
    outer_loops: int = 0
    seasonal_degree: int = 1
    trend_degree: int = 1
    low_pass_degree: int = 1

    def __post_init__(self):
        if self.period < 2:
            raise ValueError(f"period must be >= 2, got {self.period}")
        if self.seasonal_window != PERIODIC:
            _check_window("seasonal_window", self.seasonal_window)
        if self.trend_window is not None:
            _check_window("trend_window", self.trend_window)
        if self.low_pass_window is not None:
            _check_window("low_pass_window", self.low_pass_window)
        if self.inner_loops < 0 or self.outer_loops < 0:
            raise ValueError("loop counts must be >= 0")
        for name in ("seasonal_degree", "trend_degree", "low_pass_degree"):
            if getattr(self, name) not in (0, 1, 2):
                raise ValueError(f"{name} must be 0, 1 or 2")

    @property
    def resolved_trend_window(self) -> int:
        if self.trend_window is not None:
            return self.trend_window
        if self.seasonal_window == PERIODIC:
            return _next_odd(1.5 * self.period)
        return _next_odd(1.5 * self.period / (1.0 - 1.5 / self.seasonal_window))

    @property
    def resolved_low_pass_window(self) -> int:
        if self.low_pass_window is not None:
            return self.low_pass_window
        return _next_odd(self.period)

    @classmethod
    def robust(cls, **kwargs) -> "StlConfig":
        kwargs.setdefault("inner_loops", 1)
        kwargs.setdefault("outer_loops", 10)
        return cls(**kwargs)


@dataclass(frozen=True)
class DecompositionResult:
    """Seasonal/trend/remainder split of one window, as-of one week.

    seasonally_adjusted is input minus seasonal exactly; remainder is
    defined by subtraction so the three components always reconstruct
    the input. trend_fill counts flat-extended trend weeks at each end
    (classical method only).
    """

    seasonal: WeeklySeries
    trend: WeeklySeries
    remainder: WeeklySeries
    seasonally_adjusted: WeeklySeries
    method: str
    period: int
    trend_fill: tuple[int, int] = (0, 0)

    def __len__(self) -> int:
        return len(self.seasonal)

    @property
    def start(self) -> WeekStamp:
        return self.seasonal.start

    @property
    def end(self) -> WeekStamp:
        return self.seasonal.end

    def reconstructed(self) -> np.ndarray:
        return self.seasonal.values + self.trend.values + self.remainder.values


def _result(y: WeeklySeries, seasonal: np.ndarray, trend: np.ndarray, method: str,
            period: int, trend_fill: tuple[int, int] = (0, 0)) -> DecompositionResult:
    adjusted = y.values - seasonal
    remainder = adjusted - trend
    mk = lambda a: WeeklySeries(y.start, a)
    return DecompositionResult(
        seasonal=mk(seasonal),
        trend=mk(trend),
        remainder=mk(remainder),
        seasonally_adjusted=mk(adjusted),
        method=method,
        period=period,
        trend_fill=trend_fill,
    )


# ---------------------------------------------------------------------------
# STL
# ---------------------------------------------------------------------------

def _moving_average(a: np.ndarray, width: int) -> np.ndarray:
    return np.convolve(a, np.full(width, 1.0 / width), mode="valid")


def _bisquare_weights(residual: np.ndarray) -> np.ndarray:
    h = 6.0 * np.median(np.abs(residual))
    if h <= 0.0:
        return np.ones_like(residual)
    u = np.abs(residual) / h
    w = (1.0 - u * u) ** 2
    w[u >= 1.0] = 0.0
    return w


def _stl_core(v: np.ndarray, cfg: StlConfig) -> tuple[np.ndarray, np.ndarray]:
    T = v.size
    period = cfg.period
    periodic = cfg.seasonal_window == PERIODIC
    trend_window = cfg.resolved_trend_window
    low_pass_window = cfg.resolved_low_pass_window

    positions = np.arange(T, dtype=float)
    rho = np.ones(T)
    seasonal = np.zeros(T)
    trend = np.zeros(T)

    for robustness_pass in range(cfg.outer_loops + 1):
        for _ in range(cfg.inner_loops):
            detrended = v - trend
            # smooth each cycle-subseries, extended one cycle at both ends
            extended = np.empty(T + 2 * period)
            for k in range(period):
                sub = np.ascontiguousarray(detrended[k::period])
                sub_rho = np.ascontiguousarray(rho[k::period])
                nk = sub.size
                if periodic:
                    wsum = sub_rho.sum()
                    mean = float(sub_rho @ sub / wsum) if wsum > 0 else float(sub.mean())
                    extended[k::period] = mean
                else:
                    xs = np.arange(nk, dtype=float)
                    xe = np.arange(-1, nk + 1, dtype=float)
                    extended[k::period] = _loess_eval(
                        xs, sub, sub_rho, xe, cfg.seasonal_window, cfg.seasonal_degree
                    )
            # low-pass: moving averages of width period, period, 3, then loess
            low = _moving_average(_moving_average(_moving_average(extended, period), period), 3)
            low = _loess_eval(
                positions, low, np.ones(T), positions, low_pass_window, cfg.low_pass_degree
            )
            seasonal = extended[period:period + T] - low
            deseasonalized = v - seasonal
            trend = _loess_eval(
                positions, deseasonalized, rho, positions, trend_window, cfg.trend_degree
            )
        if robustness_pass < cfg.outer_loops:
            rho = _bisquare_weights(v - seasonal - trend)
    return seasonal, trend


def stl_decompose(y: WeeklySeries, cfg: StlConfig | None = None) -> DecompositionResult:
    """Iterated-loess decomposition of a weekly series.

    Each pass detrends, smooths the cycle-subseries, removes the
    low-frequency leakage from the seasonal, and re-estimates the trend by
    loess on the deseasonalized series; outer passes downweight outliers
    with bisquare weights on the remainder.
    """
    cfg = cfg or StlConfig()
    if len(y) < 2 * cfg.period:
        raise SeriesTooShort(f"need at least {2 * cfg.period} weeks, got {len(y)}")
    if not np.all(np.isfinite(y.values)):
        raise DataError("non-finite values in decomposition input")
    seasonal, trend = _stl_core(y.values, cfg)
    return _result(y, seasonal, trend, METHOD_STL, cfg.period)


# ---------------------------------------------------------------------------
# classical additive
# ---------------------------------------------------------------------------

def classical_decompose(y: WeeklySeries, period: int = 52) -> DecompositionResult:
    """Moving-average additive decomposition.

    Trend is the centered 2x`period` moving average (plain centered average
    for odd periods); the seasonal index of each phase is the mean of the
    detrended values at that phase, centered to sum to zero. Trend values
    undefined at the edges are extended flat and counted in trend_fill.
    """
    if period < 2:
        raise ValueError(f"period must be >= 2, got {period}")
    if len(y) < 2 * period:
        raise SeriesTooShort(f"need at least {2 * period} weeks, got {len(y)}")
    v = y.values
    if not np.all(np.isfinite(v)):
        raise DataError("non-finite values in decomposition input")
    T = v.size

    if period % 2 == 0:
        kernel = np.full(period + 1, 1.0 / period)
        kernel[0] = kernel[-1] = 0.5 / period
        core = np.convolve(v, kernel, mode="valid")
        half = period // 2
    else:
        core = _moving_average(v, period)
        half = (period - 1) // 2

    trend = np.empty(T)
    trend[half:half + core.size] = core
    trend[:half] = core[0]
    trend[half + core.size:] = core[-1]
    fill = (half, T - half - core.size)

    defined = slice(half, half + core.size)
    detrended = v[defined] - core
    phases = np.arange(half, half + core.size) % period
    sums = np.bincount(phases, weights=detrended, minlength=period)
    counts = np.bincount(phases, minlength=period)
    index = sums / counts
    index -= index.mean()
    seasonal = index[np.arange(T) % period]

    return _result(y, seasonal, trend, METHOD_ADDITIVE, period, trend_fill=fill)


# ---------------------------------------------------------------------------
# vintages
# ---------------------------------------------------------------------------

def vintage_decompose(
    y_full: WeeklySeries,
    t: WeekStamp,
    window_weeks: int,
    cfg: StlConfig | None = None,
    method: str = METHOD_STL,
) -> DecompositionResult:
    """Decompose exactly the `window_weeks` weeks before t, as known at t.

    Only values dated t - window_weeks .. t - 1 are consumed, so the output
    is the as-of-t vintage of the seasonal and seasonally adjusted series.
    """
    first = t - window_weeks
    last = t - 1
    if not (y_full.contains(first) and y_full.contains(last)):
        raise InsufficientHistory(
            f"vintage at {t.isoformat()} needs {first.isoformat()}..{last.isoformat()}, "
            f"series covers {y_full.start.isoformat()}..{y_full.end.isoformat()}"
        )
    window = y_full.slice(first, last)
    # re-validate: slices of diagnostic (poisoned) series must be clean here
    window = WeeklySeries(window.start, np.asarray(window.values))
    if method == METHOD_STL:
        return stl_decompose(window, cfg)
    if method == METHOD_ADDITIVE:
        period = cfg.period if cfg is not None else 52
        return classical_decompose(window, period)
    raise ValueError(f"unknown decomposition method {method!r}")


def dump_decomposition_csv(result: DecompositionResult, path, method_column: bool = False) -> None:
    """Write date,value,seasonal,trend,remainder rows (plus a method column on request)."""
    value = result.reconstructed()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["date", "value", "seasonal", "trend", "remainder"]
        if method_column:
            header.append("method")
        writer.writerow(header)
        for i, week in enumerate(result.seasonal.weeks()):
            row = [
                week.isoformat(),
                repr(float(value[i])),
                repr(float(result.seasonal.values[i])),
                repr(float(result.trend.values[i])),
                repr(float(result.remainder.values[i])),
            ]
            if method_column:
                row.append(result.method)
            writer.writerow(row)
