"""The two-stage forecaster: per-week vintages feeding penalized regressions.

At a forecast origin t the target is visible only through t-1 and the
exogenous panel through t. For every horizon a separate model is trained on
a rolling window of discounted rows; the row for week tau uses the as-of-tau
vintage of the decomposition, never a later one. Predictive intervals come
from the realized track record at the same horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping

import numpy as np

from .decomposition import (
    METHOD_ADDITIVE,
    METHOD_STL,
    DecompositionResult,
    StlConfig,
    vintage_decompose,
)
from .errors import (
    InsufficientHistory,
    InsufficientTrack,
    InsufficientVintage,
    MissingVintage,
)
from .gaussian import two_sided_z
from .regression import (
    DesignMatrix,
    FitResult,
    PenaltyGroup,
    PenaltySpec,
    cross_validate_lambda,
    fit_penalized,
    lambda_grid_2d,
    lambda_max,
    lambda_path,
)
from .series import ExogenousPanel, WeeklySeries, WeekStamp


@dataclass(frozen=True)
class PenaltyPolicy:
    """How the per-origin penalty is chosen.

    The default re-selects a shared time-series/exogenous penalty by
    interleaved cross-validation on a log-spaced path every week;
    separate_lambdas unties the two blocks over the product grid, and
    fixed_lambda bypasses selection entirely.
    """

    l1_ratio: float = 1.0
    path_points: int = 100
    path_ratio: float = 1e-3
    cv_folds: int = 5
    cv_rule: str = "min"
    separate_lambdas: bool = False
    fixed_lambda: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.l1_ratio <= 1.0:
            raise ValueError("l1_ratio must lie in [0, 1]")
        if self.path_points < 2:
            raise ValueError("path_points must be >= 2")
        if not 0.0 < self.path_ratio < 1.0:
            raise ValueError("path_ratio must lie in (0, 1)")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")
        if self.fixed_lambda is not None and self.fixed_lambda < 0:
            raise ValueError("fixed_lambda must be nonnegative")


@dataclass(frozen=True)
class PrismConfig:
    """Everything that defines one forecasting setup.

    lags: recent weeks of decomposed components entering each model;
    train_window: discounted training rows per fit; decomp_window: weeks
    decomposed for each vintage; discount: weekly down-weighting of older
    rows; interval_window/alpha: realized-error window and level for the
    predictive intervals.
    """

    lags: int = 52
    train_window: int = 156
    decomp_window: int = 700
    discount: float = 0.985
    horizons: tuple[int, ...] = (0, 1, 2, 3)
    use_exogenous: bool = True
    method: str = METHOD_STL
    stl: StlConfig = field(default_factory=StlConfig)
    penalty: PenaltyPolicy = field(default_factory=PenaltyPolicy)
    interval_window: int = 52
    interval_alpha: float = 0.05

    def __post_init__(self):
        if self.lags < 1:
            raise ValueError("lags must be >= 1")
        if self.train_window < 10:
            raise ValueError("train_window must be >= 10")
        if self.decomp_window < 2 * self.stl.period:
            raise ValueError(
                f"decomp_window must be >= {2 * self.stl.period} (two full cycles)"
            )
        if self.decomp_window < self.lags:
            raise ValueError("decomp_window must cover the requested lags")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        horizons = tuple(sorted(set(int(h) for h in self.horizons)))
        if not horizons or horizons[0] < 0:
            raise ValueError("horizons must be nonnegative and nonempty")
        object.__setattr__(self, "horizons", horizons)
        if self.method not in (METHOD_STL, METHOD_ADDITIVE):
            raise ValueError(f"unknown decomposition method {self.method!r}")
        if self.interval_window < 2:
            raise ValueError("interval_window must be >= 2")
        if not 0.0 < self.interval_alpha < 1.0:
            raise ValueError("interval_alpha must lie in (0, 1)")

    @property
    def max_horizon(self) -> int:
        return self.horizons[-1]

    def with_(self, **kwargs) -> "PrismConfig":
        return replace(self, **kwargs)


@dataclass
class ForecastRecord:
    """One point forecast, later annotated with its interval and outcome."""

    origin: WeekStamp
    horizon: int
    point: float
    se: float | None = None
    interval: tuple[float, float] | None = None
    realized: float | None = None

    @property
    def target(self) -> WeekStamp:
        return self.origin + self.horizon

    @property
    def error(self) -> float:
        if self.realized is None:
            raise ValueError("record has no realized value")
        return self.point - self.realized


@dataclass(frozen=True)
class HorizonModel:
    """The fitted model behind one (origin, horizon) forecast."""

    origin: WeekStamp
    horizon: int
    fit: FitResult
    penalty: PenaltySpec
    n_training_rows: int


class VintageCache:
    """Memoized as-of-week vintages (and their lag features) of one series.

    A vintage at week t consumes only values dated before t, so a single
    cache built over the full series serves every origin of a backtest
    without breaking causality; overlapping training windows and horizons
    share the work.
    """

    def __init__(self, y: WeeklySeries, cfg: PrismConfig):
        self._y = y
        self._cfg = cfg
        self._vintages: dict[WeekStamp, DecompositionResult] = {}
        self._lag_features: dict[WeekStamp, np.ndarray] = {}

    def vintage(self, t: WeekStamp) -> DecompositionResult:
        hit = self._vintages.get(t)
        if hit is None:
            hit = vintage_decompose(
                self._y, t, self._cfg.decomp_window, self._cfg.stl, self._cfg.method
            )
            self._vintages[t] = hit
        return hit

    def lag_features(self, t: WeekStamp) -> np.ndarray:
        hit = self._lag_features.get(t)
        if hit is None:
            hit = build_features(self.vintage(t), None, self._cfg.lags)
            hit.flags.writeable = False
            self._lag_features[t] = hit
        return hit

    def __contains__(self, t: WeekStamp) -> bool:
        first = t - self._cfg.decomp_window
        return self._y.contains(first) and self._y.contains(t - 1)

    def __getitem__(self, t: WeekStamp) -> DecompositionResult:
        return self.vintage(t)


def build_features(vintage: DecompositionResult, x_row: np.ndarray | None, lags: int) -> np.ndarray:
    """Feature vector for the week after the vintage window.

    Most recent lag first: `lags` seasonally adjusted values, then `lags`
    seasonal values, then the exogenous row when present.
    """
    if len(vintage) < lags:
        raise InsufficientVintage(f"vintage of {len(vintage)} weeks cannot supply {lags} lags")
    z = vintage.seasonally_adjusted.values[-lags:][::-1]
    s = vintage.seasonal.values[-lags:][::-1]
    if x_row is None:
        return np.concatenate([z, s])
    return np.concatenate([z, s, np.asarray(x_row, dtype=float)])


def feature_groups(lags: int, n_exogenous: int) -> np.ndarray:
    g = np.empty(2 * lags + n_exogenous, dtype=np.int8)
    g[: 2 * lags] = PenaltyGroup.TIME_SERIES
    g[2 * lags:] = PenaltyGroup.EXOGENOUS
    return g


def assemble_training(
    y: WeeklySeries,
    x: ExogenousPanel | None,
    t: WeekStamp,
    horizon: int,
    cfg: PrismConfig,
    vintages: Mapping[WeekStamp, DecompositionResult] | VintageCache,
) -> DesignMatrix:
    """Training matrix for one origin and horizon.

    Row tau (tau = t-horizon-train_window .. t-horizon-1) carries the
    as-of-tau lag features, the exogenous row at tau, response y[tau +
    horizon], and weight discount^(t - tau). Every response predates t.
    """
    n = cfg.train_window
    first_tau = t - (horizon + n)
    last_tau = t - (horizon + 1)
    if not (y.contains(first_tau + horizon) and y.contains(last_tau + horizon)):
        raise InsufficientHistory(
            f"training at {t.isoformat()} h={horizon} needs responses "
            f"{(first_tau + horizon).isoformat()}..{(last_tau + horizon).isoformat()}"
        )
    use_x = x is not None and cfg.use_exogenous
    if use_x and not (x.contains(first_tau) and x.contains(last_tau)):
        raise InsufficientHistory(
            f"exogenous panel must cover {first_tau.isoformat()}..{last_tau.isoformat()}"
        )
    is_cache = isinstance(vintages, VintageCache)
    rows = []
    responses = np.empty(n)
    weights = np.empty(n)
    for i in range(n):
        tau = first_tau + i
        if tau not in vintages:
            raise MissingVintage(f"no vintage for {tau.isoformat()}")
        base = vintages.lag_features(tau) if is_cache else build_features(vintages[tau], None, cfg.lags)
        if use_x:
            rows.append(np.concatenate([base, x.row_at(tau)]))
        else:
            rows.append(base)
        responses[i] = y.value_at(tau + horizon)
        weights[i] = cfg.discount ** (t - tau)
    groups = feature_groups(cfg.lags, x.n_terms if use_x else 0)
    return DesignMatrix(np.vstack(rows), responses, weights, groups)


def _intercept_only(X: DesignMatrix, spec: PenaltySpec) -> FitResult:
    w = X.weights / X.weights.sum()
    ybar = float(w @ X.responses)
    resid = X.responses - ybar
    return FitResult(
        intercept=ybar,
        coefficients=np.zeros(X.n_features),
        lambda_used=spec,
        n_nonzero=0,
        objective_value=0.5 * float(w @ (resid * resid)),
        converged=True,
    )


def select_and_fit(X: DesignMatrix, policy: PenaltyPolicy) -> tuple[PenaltySpec, FitResult]:
    """Pick the penalty per policy and fit the final model on all rows."""
    if policy.fixed_lambda is not None:
        spec = PenaltySpec(policy.fixed_lambda, policy.fixed_lambda, policy.l1_ratio)
        return spec, fit_penalized(X, spec)
    if lambda_max(X, policy.l1_ratio) <= 0.0:
        # no usable signal in the response window: intercept-only model
        spec = PenaltySpec(0.0, 0.0, policy.l1_ratio)
        return spec, _intercept_only(X, spec)
    path = lambda_path(X, policy.path_points, policy.path_ratio, policy.l1_ratio)
    if policy.separate_lambdas:
        path = lambda_grid_2d(path)
    spec = cross_validate_lambda(X, path, policy.cv_folds, policy.cv_rule)
    return spec, fit_penalized(X, spec)


def predictive_interval(
    history: Iterable[tuple[float, float]],
    point: float,
    alpha: float = 0.05,
    window: int = 52,
) -> tuple[float, float, float]:
    """Standard error and interval from the recent realized track record.

    se is the root mean squared error over the most recent `window`
    (forecast, realized) pairs; the interval is point +/- z * se at the
    two-sided level alpha.
    """
    pairs = [(float(f), float(r)) for f, r in history]
    if len(pairs) < window:
        raise InsufficientTrack(f"need {window} realized forecasts, have {len(pairs)}")
    recent = pairs[-window:]
    mse = sum((f - r) ** 2 for f, r in recent) / window
    se = math.sqrt(mse)
    z = two_sided_z(alpha)
    return se, point - z * se, point + z * se


def forecast_one(
    y: WeeklySeries,
    x: ExogenousPanel | None,
    t: WeekStamp,
    cfg: PrismConfig,
    *,
    cache: VintageCache | None = None,
    track: Iterable[ForecastRecord] | None = None,
    return_models: bool = False,
):
    """Forecasts for every configured horizon at one origin.

    Only target values before t and exogenous values through t are read.
    When `track` supplies enough earlier records whose realized values were
    already known at t, intervals are attached.
    """
    if not y.contains(t - 1):
        raise InsufficientHistory(f"target series must reach {(t - 1).isoformat()}")
    y_vis = y.slice(y.start, t - 1)
    x_vis = None
    if x is not None and cfg.use_exogenous:
        if not x.contains(t):
            raise InsufficientHistory(f"exogenous panel must cover the origin {t.isoformat()}")
        x_vis = x.slice(x.start, t)
    if cache is None:
        cache = VintageCache(y_vis, cfg)

    records: list[ForecastRecord] = []
    models: list[HorizonModel] = []
    for horizon in cfg.horizons:
        X = assemble_training(y_vis, x_vis, t, horizon, cfg, cache)
        spec, fit = select_and_fit(X, cfg.penalty)
        base = cache.lag_features(t)
        if x_vis is not None:
            feats = np.concatenate([base, x_vis.row_at(t)])
        else:
            feats = base
        rec = ForecastRecord(origin=t, horizon=horizon, point=fit.predict_one(feats))
        if track is not None:
            pairs = [
                (r.point, r.realized)
                for r in track
                if r.horizon == horizon and r.realized is not None and r.origin + r.horizon < t
            ]
            if len(pairs) >= cfg.interval_window:
                se, lo, hi = predictive_interval(pairs, rec.point, cfg.interval_alpha, cfg.interval_window)
                rec.se = se
                rec.interval = (lo, hi)
        records.append(rec)
        if return_models:
            models.append(HorizonModel(t, horizon, fit, spec, X.n_rows))
    if return_models:
        return records, models
    return records


def attach_intervals(records: list[ForecastRecord], cfg: PrismConfig) -> None:
    """Second pass over a backtest: add se/interval where the track allows.

    For a record at origin t and horizon l, usable history are earlier
    records at the same horizon whose targets realized by t-1; the most
    recent interval_window of them feed the standard error. Records with
    too little history keep se/interval empty.
    """
    for horizon in sorted({r.horizon for r in records}):
        recs = sorted((r for r in records if r.horizon == horizon), key=lambda r: r.origin)
        pairs: list[tuple[float, float]] = []
        feed = 0
        for j, rec in enumerate(recs):
            # records up to index j - horizon - 1 have targets <= origin - 1
            usable_end = j - horizon
            while feed < usable_end:
                prior = recs[feed]
                if prior.realized is not None and math.isfinite(prior.realized):
                    pairs.append((prior.point, prior.realized))
                feed += 1
            if len(pairs) >= cfg.interval_window:
                se, lo, hi = predictive_interval(
                    pairs, rec.point, cfg.interval_alpha, cfg.interval_window
                )
                rec.se = se
                rec.interval = (lo, hi)


def backtest(
    y: WeeklySeries,
    x: ExogenousPanel | None = None,
    *,
    start: WeekStamp,
    end: WeekStamp,
    cfg: PrismConfig,
    panel_for_origin: Callable[[WeekStamp], ExogenousPanel] | None = None,
    fill_realized: bool = True,
) -> list[ForecastRecord]:
    """Weekly rolling-origin forecasts over start..end inclusive.

    Each origin sees the target through the prior week and the exogenous
    panel through the origin week. `panel_for_origin` (e.g. a batch
    schedule) overrides `x` per origin so normalization batches never mix
    within one fit. Realized values and intervals are filled afterwards.
    """
    if end < start:
        raise ValueError("backtest range is empty")
    cache = VintageCache(y, cfg)
    records: list[ForecastRecord] = []
    n_origins = end - start + 1
    for i in range(n_origins):
        t = start + i
        panel = panel_for_origin(t) if panel_for_origin is not None else x
        records.extend(forecast_one(y, panel, t, cfg, cache=cache))
    if fill_realized:
        for rec in records:
            target = rec.target
            if y.contains(target):
                value = y.values[target - y.start]
                if math.isfinite(value):
                    rec.realized = float(value)
        attach_intervals(records, cfg)
    return records
