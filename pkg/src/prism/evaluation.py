"""Accuracy statistics over realized forecast tracks.

A track is one method's (origin, horizon, point, realized) records on a
common weekly grid. Errors are point minus realized; headline tables report
each method's RMSE and MAE relative to the naive last-value baseline, plus
pairwise significance tests and cumulative squared-error-difference curves.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import t as student_t

from .errors import (
    DegenerateDifferential,
    EmptyTrack,
    GridMismatch,
    InsufficientHistory,
    TooFew,
    TrackTooShort,
    ZeroReferenceError,
)
from .gaussian import norm_cdf, norm_ppf
from .pipeline import ForecastRecord
from .series import WeeklySeries, WeekStamp


@dataclass
class MethodTrack:
    """One method's realized forecasts, deduplicated and sorted."""

    method_name: str
    records: list[ForecastRecord]

    def __post_init__(self):
        recs = sorted(self.records, key=lambda r: (r.origin, r.horizon))
        seen = set()
        for r in recs:
            if r.realized is None:
                raise ValueError("MethodTrack records must carry realized values")
            key = (r.origin, r.horizon)
            if key in seen:
                raise ValueError(f"duplicate record for {key[0].isoformat()} h={key[1]}")
            seen.add(key)
        self.records = recs

    @classmethod
    def from_records(cls, name: str, records) -> "MethodTrack":
        """Build a track, dropping records whose outcome is not yet known."""
        return cls(name, [r for r in records if r.realized is not None])

    def horizons(self) -> list[int]:
        return sorted({r.horizon for r in self.records})

    def at_horizon(self, horizon: int) -> list[ForecastRecord]:
        return [r for r in self.records if r.horizon == horizon]

    def errors(self, horizon: int) -> np.ndarray:
        return np.array([r.point - r.realized for r in self.at_horizon(horizon)])

    def origins(self, horizon: int) -> list[WeekStamp]:
        return [r.origin for r in self.at_horizon(horizon)]

    def grid(self) -> frozenset:
        return frozenset((r.origin, r.horizon) for r in self.records)

    def restricted(self, first_origin: WeekStamp, last_target: WeekStamp) -> "MethodTrack":
        """Records with origin >= first_origin and target <= last_target.

        This is the usual evaluation-window convention: the horizon-l
        track starts at the same first origin and ends l weeks earlier.
        """
        kept = [
            r for r in self.records
            if r.origin >= first_origin and r.origin + r.horizon <= last_target
        ]
        return MethodTrack(self.method_name, kept)


def naive_forecast(y: WeeklySeries, t: WeekStamp, horizons) -> list[ForecastRecord]:
    """The last released value predicts every horizon."""
    if not y.contains(t - 1):
        raise InsufficientHistory(f"no release before {t.isoformat()}")
    last = y.value_at(t - 1)
    return [ForecastRecord(origin=t, horizon=int(h), point=last) for h in horizons]


def naive_track(y: WeeklySeries, start: WeekStamp, end: WeekStamp, horizons) -> MethodTrack:
    """Naive forecasts over a range of origins, with outcomes filled in."""
    records = []
    for i in range(end - start + 1):
        t = start + i
        for rec in naive_forecast(y, t, horizons):
            target = rec.target
            if y.contains(target) and math.isfinite(y.values[target - y.start]):
                rec.realized = y.value_at(target)
            records.append(rec)
    return MethodTrack.from_records("naive", records)


def rmse(track: MethodTrack, horizon: int) -> float:
    e = track.errors(horizon)
    if e.size == 0:
        raise EmptyTrack(f"{track.method_name} has no records at horizon {horizon}")
    return float(np.sqrt(np.mean(e * e)))


def mae(track: MethodTrack, horizon: int) -> float:
    e = track.errors(horizon)
    if e.size == 0:
        raise EmptyTrack(f"{track.method_name} has no records at horizon {horizon}")
    return float(np.mean(np.abs(e)))


@dataclass(frozen=True)
class MetricsRow:
    method: str
    horizon: int
    rmse_absolute: float
    mae_absolute: float
    rmse_relative: float
    mae_relative: float


def _check_grid(track: MethodTrack, reference: MethodTrack) -> None:
    if track.grid() != reference.grid():
        only_t = track.grid() - reference.grid()
        only_r = reference.grid() - track.grid()
        example = next(iter(only_t or only_r))
        raise GridMismatch(
            f"{track.method_name} and {reference.method_name} cover different grids "
            f"(e.g. {example[0].isoformat()} h={example[1]})"
        )


def relative_errors(tracks: list[MethodTrack], reference: MethodTrack) -> list[MetricsRow]:
    """Per-method, per-horizon errors as ratios to the reference's.

    The reference's own rows are included with ratios of exactly 1.
    """
    rows: list[MetricsRow] = []
    for horizon in reference.horizons():
        ref_rmse = rmse(reference, horizon)
        ref_mae = mae(reference, horizon)
        rows.append(MetricsRow(reference.method_name, horizon, ref_rmse, ref_mae, 1.0, 1.0))
        if ref_rmse == 0.0 or ref_mae == 0.0:
            if any(t is not reference for t in tracks):
                raise ZeroReferenceError(
                    f"reference {reference.method_name} has zero error at horizon {horizon}"
                )
    for track in tracks:
        if track is reference:
            continue
        _check_grid(track, reference)
        for horizon in reference.horizons():
            ref_rmse = rmse(reference, horizon)
            ref_mae = mae(reference, horizon)
            rows.append(
                MetricsRow(
                    track.method_name,
                    horizon,
                    rmse(track, horizon),
                    mae(track, horizon),
                    rmse(track, horizon) / ref_rmse,
                    mae(track, horizon) / ref_mae,
                )
            )
    return rows


def cssed(track_m: MethodTrack, track_ref: MethodTrack, horizon: int) -> WeeklySeries:
    """Running sum of squared-error differences (method minus reference).

    Positive values mean the method has accumulated more squared error
    than the reference up to that origin.
    """
    origins_m = track_m.origins(horizon)
    origins_r = track_ref.origins(horizon)
    if origins_m != origins_r or not origins_m:
        raise GridMismatch(
            f"{track_m.method_name} and {track_ref.method_name} do not share origins at horizon {horizon}"
        )
    for a, b in zip(origins_m, origins_m[1:]):
        if b - a != 1:
            raise GridMismatch(f"origins skip a week between {a.isoformat()} and {b.isoformat()}")
    e_m = track_m.errors(horizon)
    e_r = track_ref.errors(horizon)
    return WeeklySeries(origins_m[0], np.cumsum(e_m * e_m - e_r * e_r))


@dataclass(frozen=True)
class DmResult:
    """Diebold-Mariano comparison of two tracks under squared-error loss.

    statistic/p_value carry the small-sample corrected variant (Student-t
    reference with n-1 degrees of freedom); the plain asymptotic-normal
    variant is reported alongside.
    """

    statistic: float
    p_value: float
    statistic_uncorrected: float
    p_value_uncorrected: float
    n: int
    truncation_lag: int

    def __iter__(self):
        return iter((self.statistic, self.p_value))


def diebold_mariano(
    track_a: MethodTrack,
    track_b: MethodTrack,
    horizon: int,
    loss: str = "squared",
) -> DmResult:
    """Test equal predictive accuracy at one horizon.

    The loss differential d_t = e_a(t)^2 - e_b(t)^2 gets a Newey-West
    long-run variance with Bartlett weights truncated at horizon steps
    (h = horizon + 1, lags up to h - 1). Positive statistics mean track_a
    is less accurate.
    """
    if loss != "squared":
        raise ValueError(f"unsupported loss {loss!r}")
    if track_a.origins(horizon) != track_b.origins(horizon):
        raise GridMismatch(
            f"{track_a.method_name} and {track_b.method_name} do not share origins at horizon {horizon}"
        )
    e_a = track_a.errors(horizon)
    e_b = track_b.errors(horizon)
    n = e_a.size
    if n < 10:
        raise TrackTooShort(f"need at least 10 shared records, got {n}")
    d = e_a * e_a - e_b * e_b
    dbar = float(d.mean())
    dc = d - dbar
    h = horizon + 1
    gamma0 = float(dc @ dc) / n
    if gamma0 <= 0.0:
        raise DegenerateDifferential("loss differential has zero variance")
    lrv = gamma0
    for k in range(1, h):
        gamma_k = float(dc[k:] @ dc[:-k]) / n
        lrv += 2.0 * (1.0 - k / h) * gamma_k
    if lrv <= 0.0:
        raise DegenerateDifferential("long-run variance is not positive")
    stat = dbar / math.sqrt(lrv / n)
    p_plain = 2.0 * (1.0 - norm_cdf(abs(stat)))
    hln = math.sqrt((n + 1 - 2 * h + h * (h - 1) / n) / n)
    stat_c = hln * stat
    p_c = 2.0 * float(student_t.sf(abs(stat_c), df=n - 1))
    return DmResult(
        statistic=stat_c,
        p_value=p_c,
        statistic_uncorrected=stat,
        p_value_uncorrected=p_plain,
        n=n,
        truncation_lag=h - 1,
    )


def qq_normal_data(residuals) -> np.ndarray:
    """Sorted residuals paired with standard-normal plotting quantiles."""
    r = np.asarray(residuals, dtype=float)
    if r.ndim != 1 or r.size < 3:
        raise TooFew(f"need at least 3 residuals, got {r.size}")
    n = r.size
    theory = np.array([norm_ppf((i - 0.5) / n) for i in range(1, n + 1)])
    return np.column_stack([theory, np.sort(r)])


# ---------------------------------------------------------------------------
# report assembly and CSV emission
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DmRow:
    method: str
    reference: str
    horizon: int
    statistic: float
    p_value: float
    statistic_uncorrected: float
    p_value_uncorrected: float


@dataclass
class EvaluationReport:
    """Everything the evaluation stage emits, ready for CSV writers."""

    metrics: list[MetricsRow]
    dm: list[DmRow] = field(default_factory=list)
    cssed_series: dict[tuple[str, int], WeeklySeries] = field(default_factory=dict)
    qq_pairs: dict[tuple[str, int], np.ndarray] = field(default_factory=dict)

    def write_metrics_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "horizon", "rmse_relative", "mae_relative",
                        "rmse_absolute", "mae_absolute"])
            for row in self.metrics:
                w.writerow([row.method, row.horizon, repr(row.rmse_relative),
                            repr(row.mae_relative), repr(row.rmse_absolute),
                            repr(row.mae_absolute)])

    def write_dm_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "reference", "horizon", "statistic", "p_value",
                        "statistic_uncorrected", "p_value_uncorrected"])
            for row in self.dm:
                w.writerow([row.method, row.reference, row.horizon, repr(row.statistic),
                            repr(row.p_value), repr(row.statistic_uncorrected),
                            repr(row.p_value_uncorrected)])

    def write_cssed_csv(self, path, method: str, horizon: int) -> None:
        series = self.cssed_series[(method, horizon)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["origin_date", "cssed"])
            for week, value in zip(series.weeks(), series.values):
                w.writerow([week.isoformat(), repr(float(value))])

    def write_qq_csv(self, path, method: str, horizon: int) -> None:
        pairs = self.qq_pairs[(method, horizon)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["theoretical_quantile", "sample_quantile"])
            for theo, sample in pairs:
                w.writerow([repr(float(theo)), repr(float(sample))])


def build_report(
    tracks: list[MethodTrack],
    naive: MethodTrack,
    comparison_reference: str | None = None,
) -> EvaluationReport:
    """Metrics relative to the naive baseline, DM tests and CSSED curves
    against the comparison reference (default: the first track)."""
    report = EvaluationReport(metrics=relative_errors(tracks, naive))
    if not tracks:
        return report
    ref_name = comparison_reference or tracks[0].method_name
    by_name = {t.method_name: t for t in tracks}
    if ref_name not in by_name:
        raise ValueError(f"comparison reference {ref_name!r} not among the tracks")
    reference = by_name[ref_name]
    for track in tracks:
        for horizon in track.horizons():
            residuals = track.errors(horizon)
            if residuals.size >= 3:
                report.qq_pairs[(track.method_name, horizon)] = qq_normal_data(residuals)
        if track is reference:
            continue
        for horizon in sorted(set(track.horizons()) & set(reference.horizons())):
            report.cssed_series[(track.method_name, horizon)] = cssed(track, reference, horizon)
            try:
                dm = diebold_mariano(track, reference, horizon)
            except (DegenerateDifferential, TrackTooShort):
                continue
            report.dm.append(
                DmRow(track.method_name, ref_name, horizon, dm.statistic, dm.p_value,
                      dm.statistic_uncorrected, dm.p_value_uncorrected)
            )
    return report
