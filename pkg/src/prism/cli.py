"""Command-line front end: decompose, backtest, evaluate, sweep.

Every command is deterministic given its inputs: same flags, same files,
byte-identical outputs. Exit codes: 0 success, 1 usage, 2 data error,
3 numerical failure. The output directory defaults to the current directory
and can be overridden by --out or the PRISM_OUTPUT_DIR environment variable
(flag wins).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decomposition import (
    METHOD_ADDITIVE,
    METHOD_STL,
    PERIODIC,
    StlConfig,
    dump_decomposition_csv,
    vintage_decompose,
)
from .errors import DataError, NumericalError
from .evaluation import MethodTrack, build_report, naive_forecast, relative_errors, rmse
from .forecast_io import read_forecast_csv, write_forecast_csv
from .ingest import build_schedule, parse_batch_manifest, parse_claims_csv
from .pipeline import ForecastRecord, PenaltyPolicy, PrismConfig, backtest
from .series import WeeklySeries, WeekStamp
from .svgplot import LineSeries, line_plot_svg

OUTPUT_DIR_ENV = "PRISM_OUTPUT_DIR"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    """One reproducible run: model settings, file paths, range, output.

    Defaults are the production choices: 52 lags, a 156-week training
    window, 700-week decomposition window, 0.985 weekly discount, horizons
    0-3, penalty selected by 5-fold CV on a 100-point path, 52-week
    interval window at the 95% level. Round-trips losslessly through JSON.
    """

    claims: str | None = None
    trends_manifest: str | None = None
    start: str | None = None
    end: str | None = None
    output_dir: str = "."
    seed: int = 0  # reserved for Monte-Carlo utilities; the pipeline is seed-free
    value_column: str = "ICNSA"
    lags: int = 52
    train_window: int = 156
    decomp_window: int = 700
    discount: float = 0.985
    horizons: list[int] = field(default_factory=lambda: [0, 1, 2, 3])
    use_exogenous: bool = True
    method: str = METHOD_STL
    stl_period: int = 52
    stl_seasonal_window: int | str = PERIODIC
    stl_trend_window: int | None = None
    stl_low_pass_window: int | None = None
    stl_inner_loops: int = 2
    stl_outer_loops: int = 0
    l1_ratio: float = 1.0
    path_points: int = 100
    path_ratio: float = 1e-3
    cv_folds: int = 5
    cv_rule: str = "min"
    separate_lambdas: bool = False
    fixed_lambda: float | None = None
    interval_window: int = 52
    interval_alpha: float = 0.05

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        data = json.loads(text)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def stl_config(self) -> StlConfig:
        return StlConfig(
            period=self.stl_period,
            seasonal_window=self.stl_seasonal_window,
            trend_window=self.stl_trend_window,
            low_pass_window=self.stl_low_pass_window,
            inner_loops=self.stl_inner_loops,
            outer_loops=self.stl_outer_loops,
        )

    def prism_config(self) -> PrismConfig:
        return PrismConfig(
            lags=self.lags,
            train_window=self.train_window,
            decomp_window=self.decomp_window,
            discount=self.discount,
            horizons=tuple(self.horizons),
            use_exogenous=self.use_exogenous,
            method=self.method,
            stl=self.stl_config(),
            penalty=PenaltyPolicy(
                l1_ratio=self.l1_ratio,
                path_points=self.path_points,
                path_ratio=self.path_ratio,
                cv_folds=self.cv_folds,
                cv_rule=self.cv_rule,
                separate_lambdas=self.separate_lambdas,
                fixed_lambda=self.fixed_lambda,
            ),
            interval_window=self.interval_window,
            interval_alpha=self.interval_alpha,
        )


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """argparse with the usage exit code pinned to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _saturday(text: str) -> str:
    try:
        WeekStamp.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _seasonal_window(text: str):
    if text.lower() == PERIODIC:
        return PERIODIC
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected 'periodic' or an odd integer, got {text!r}"
        ) from None


_MODEL_FLAGS = [
    # (flag, RunConfig field, type, help)
    ("--lags", "lags", int, "recent decomposed weeks entering each model"),
    ("--train-window", "train_window", int, "training rows per fit (weeks)"),
    ("--decomp-window", "decomp_window", int, "weeks decomposed per vintage"),
    ("--discount", "discount", float, "weekly down-weighting factor in (0, 1]"),
    ("--horizons", "horizons", _int_list, "comma-separated forecast horizons"),
    ("--method", "method", str, f"decomposition method: {METHOD_STL} or {METHOD_ADDITIVE}"),
    ("--stl-seasonal-window", "stl_seasonal_window", _seasonal_window,
     "'periodic' or an odd window for the cycle-subseries smoother"),
    ("--stl-inner-loops", "stl_inner_loops", int, "inner smoothing passes"),
    ("--stl-outer-loops", "stl_outer_loops", int, "robustness passes (10 with --robust-stl)"),
    ("--l1-ratio", "l1_ratio", float, "L1 fraction of the penalty (1 = pure L1, 0 = ridge)"),
    ("--path-points", "path_points", int, "penalty path length"),
    ("--path-ratio", "path_ratio", float, "smallest penalty as a fraction of the largest"),
    ("--cv-folds", "cv_folds", int, "cross-validation folds"),
    ("--cv-rule", "cv_rule", str, "penalty selection rule: min or one_se"),
    ("--fixed-lambda", "fixed_lambda", float, "skip CV and use this penalty"),
    ("--interval-window", "interval_window", int, "realized forecasts backing each interval"),
    ("--interval-alpha", "interval_alpha", float, "two-sided interval level"),
]


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    for flag, dest, typ, help_text in _MODEL_FLAGS:
        parser.add_argument(flag, dest=dest, type=typ, default=None, help=help_text)
    parser.add_argument("--separate-lambdas", dest="separate_lambdas", action="store_true",
                        default=None, help="untie the time-series and exogenous penalties (2-D grid)")
    parser.add_argument("--robust-stl", dest="robust_stl", action="store_true", default=None,
                        help="robust decomposition (1 inner pass, 10 bisquare passes)")


def _add_common_io(parser: argparse.ArgumentParser, claims_required: bool = True) -> None:
    parser.add_argument("--claims", required=claims_required, help="weekly claims CSV")
    parser.add_argument("--value-column", dest="value_column", default=None,
                        help="claims value column name (default ICNSA)")
    parser.add_argument("--config", help="JSON run-config file; flags override it")
    parser.add_argument("--out", help="output directory (default: . or $PRISM_OUTPUT_DIR)")
    parser.add_argument("--seed", type=int, default=None,
                        help="stored for reproducibility; the pipeline itself is seed-free")


def _merge_config(args: argparse.Namespace) -> RunConfig:
    if getattr(args, "config", None):
        try:
            rc = RunConfig.from_json(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError, ValueError, TypeError) as exc:
            raise DataError(f"cannot load config {args.config}: {exc}") from exc
    else:
        rc = RunConfig()
    for fld in dataclasses.fields(RunConfig):
        value = getattr(args, fld.name, None)
        if value is not None:
            setattr(rc, fld.name, value)
    if getattr(args, "robust_stl", None):
        rc.stl_inner_loops = 1
        rc.stl_outer_loops = 10
    if getattr(args, "claims", None):
        rc.claims = args.claims
    if getattr(args, "trends", None):
        rc.trends_manifest = args.trends
    if getattr(args, "out", None):
        rc.output_dir = args.out
    elif not getattr(args, "config", None) or rc.output_dir == ".":
        rc.output_dir = os.environ.get(OUTPUT_DIR_ENV, rc.output_dir)
    return rc


def _outdir(rc: RunConfig) -> Path:
    path = Path(rc.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fill_realized(records: list[ForecastRecord], y: WeeklySeries) -> None:
    for rec in records:
        target = rec.target
        if y.contains(target):
            rec.realized = y.value_at(target)


def _naive_records(y: WeeklySeries, start: WeekStamp, end: WeekStamp, horizons) -> list[ForecastRecord]:
    records: list[ForecastRecord] = []
    for i in range(end - start + 1):
        records.extend(naive_forecast(y, start + i, horizons))
    _fill_realized(records, y)
    return records


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_decompose(args: argparse.Namespace) -> int:
    rc = _merge_config(args)
    y = parse_claims_csv(rc.claims, value_column=rc.value_column)
    at = WeekStamp.parse(args.at)
    result = vintage_decompose(y, at, rc.decomp_window, rc.stl_config(), rc.method)
    out = _outdir(rc) / "decomposition.csv"
    dump_decomposition_csv(result, out, method_column=True)
    print(f"wrote {out} ({len(result)} weeks, method={result.method})")
    return EXIT_OK


def _run_backtest(rc: RunConfig) -> tuple[list[ForecastRecord], list[ForecastRecord]]:
    if rc.claims is None or rc.start is None or rc.end is None:
        raise DataError("backtest needs --claims, --from and --to")
    y = parse_claims_csv(rc.claims, value_column=rc.value_column)
    start = WeekStamp.parse(rc.start)
    end = WeekStamp.parse(rc.end)
    cfg = rc.prism_config()
    panel_for_origin = None
    if rc.trends_manifest is not None and rc.use_exogenous:
        batches = parse_batch_manifest(rc.trends_manifest)
        schedule = build_schedule(batches, (start, end), cfg)
        panel_for_origin = schedule.panel_for
    else:
        cfg = cfg.with_(use_exogenous=False)
    records = backtest(y, None, start=start, end=end, cfg=cfg,
                       panel_for_origin=panel_for_origin)
    naive = _naive_records(y, start, end, cfg.horizons)
    return records, naive


def cmd_backtest(args: argparse.Namespace) -> int:
    rc = _merge_config(args)
    records, naive = _run_backtest(rc)
    outdir = _outdir(rc)
    prism_path = outdir / "prism.csv"
    naive_path = outdir / "naive.csv"
    write_forecast_csv(records, prism_path)
    write_forecast_csv(naive, naive_path)
    label = "with exogenous" if rc.trends_manifest else "without exogenous"
    print(f"wrote {prism_path} ({len(records)} records, {label}) and {naive_path}")
    return EXIT_OK


def _parse_named_tracks(specs: list[str]) -> list[tuple[str, str]]:
    named = []
    for spec in specs:
        if "=" in spec:
            name, path = spec.split("=", 1)
        else:
            name, path = Path(spec).stem, spec
        named.append((name.strip(), path.strip()))
    names = [n for n, _ in named]
    if len(set(names)) != len(names):
        raise DataError(f"duplicate track names: {names}")
    return named


def cmd_evaluate(args: argparse.Namespace) -> int:
    rc = _merge_config(args)
    y = parse_claims_csv(rc.claims, value_column=rc.value_column)
    tracks: list[MethodTrack] = []
    for name, path in _parse_named_tracks(args.forecasts):
        records = read_forecast_csv(path)
        kept = []
        for rec in records:
            if y.contains(rec.target):
                rec.realized = y.value_at(rec.target)  # the claims file is authoritative
                kept.append(rec)
        track = MethodTrack.from_records(name, kept)
        if args.start or args.end:
            first = WeekStamp.parse(args.start) if args.start else min(r.origin for r in track.records)
            last = WeekStamp.parse(args.end) if args.end else max(r.target for r in track.records)
            track = track.restricted(first, last)
        if not track.records:
            raise DataError(f"track {name!r} has no evaluable records in range")
        tracks.append(track)
    grid = tracks[0].grid()
    naive_recs = []
    for origin, horizon in sorted(grid):
        rec = naive_forecast(y, origin, [horizon])[0]
        rec.realized = y.value_at(rec.target)
        naive_recs.append(rec)
    naive = MethodTrack("naive", naive_recs)
    report = build_report(tracks, naive, comparison_reference=args.reference)

    outdir = _outdir(rc)
    report.write_metrics_csv(outdir / "metrics.csv")
    written = [outdir / "metrics.csv"]
    if report.dm:
        report.write_dm_csv(outdir / "dm_pvalues.csv")
        written.append(outdir / "dm_pvalues.csv")
    for method, horizon in sorted(report.cssed_series):
        path = outdir / f"cssed_{method}_h{horizon}.csv"
        report.write_cssed_csv(path, method, horizon)
        written.append(path)
    for method, horizon in sorted(report.qq_pairs):
        path = outdir / f"qq_{method}_h{horizon}.csv"
        report.write_qq_csv(path, method, horizon)
        written.append(path)
    if args.plots:
        written.extend(_write_plots(outdir, tracks, report))
    print(f"wrote {len(written)} files to {outdir}")
    return EXIT_OK


def _write_plots(outdir: Path, tracks: list[MethodTrack], report) -> list[Path]:
    paths = []
    horizons = sorted({h for t in tracks for h in t.horizons()})
    for horizon in horizons:
        series = []
        reference_added = False
        for track in tracks:
            recs = track.at_horizon(horizon)
            if not recs:
                continue
            xs = [float(r.target.saturday.toordinal()) for r in recs]
            if not reference_added:
                series.append(LineSeries("realized", xs, [r.realized for r in recs]))
                reference_added = True
            series.append(LineSeries(track.method_name, xs, [r.point for r in recs]))
        if series:
            path = outdir / f"plot_forecasts_h{horizon}.svg"
            line_plot_svg(path, series, title=f"Forecasts vs realized, horizon {horizon}")
            paths.append(path)
        cssed_series = [
            LineSeries(method, [float(w.saturday.toordinal()) for w in s.weeks()], list(s.values))
            for (method, h), s in sorted(report.cssed_series.items())
            if h == horizon
        ]
        if cssed_series:
            path = outdir / f"plot_cssed_h{horizon}.svg"
            line_plot_svg(path, cssed_series, title=f"Cumulative squared-error difference, horizon {horizon}")
            paths.append(path)
    return paths


_SWEEP_PARAMS = {
    "w": "discount",
    "discount": "discount",
    "n": "train_window",
    "train-window": "train_window",
    "m": "decomp_window",
    "decomp-window": "decomp_window",
    "regularization": "l1_ratio",
}


def cmd_sweep(args: argparse.Namespace) -> int:
    rc = _merge_config(args)
    param = _SWEEP_PARAMS.get(args.param.lower())
    if param is None:
        raise DataError(f"unknown sweep parameter {args.param!r}; "
                        f"choose from {sorted(set(_SWEEP_PARAMS))}")
    values = args.values
    rows = []
    horizons = None
    for value in values:
        variant = dataclasses.replace(rc)
        if param in ("train_window", "decomp_window"):
            setattr(variant, param, int(value))
        else:
            setattr(variant, param, float(value))
        records, naive_recs = _run_backtest(variant)
        track = MethodTrack.from_records("prism", records)
        naive = MethodTrack.from_records("naive", naive_recs)
        horizons = track.horizons()
        metrics = relative_errors([track], naive)
        by_h = {m.horizon: m for m in metrics if m.method == "prism"}
        rows.append((value, [by_h[h].rmse_relative for h in horizons]))
    outdir = _outdir(rc)
    out = outdir / "sweep.csv"
    with open(out, "w", newline="", encoding="utf-8") as fh:
        import csv as _csv

        writer = _csv.writer(fh)
        writer.writerow([args.param] + [f"rmse_relative_h{h}" for h in horizons])
        for value, rel in rows:
            writer.writerow([value] + [repr(r) for r in rel])
    print(f"wrote {out} ({len(rows)} rows)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="prism", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_dec = sub.add_parser("decompose", help="write one vintage decomposition as CSV")
    _add_common_io(p_dec)
    _add_model_flags(p_dec)
    p_dec.add_argument("--at", required=True, type=_saturday,
                       help="vintage week (a Saturday); the window ends the week before")
    p_dec.set_defaults(func=cmd_decompose)

    p_back = sub.add_parser("backtest", help="weekly rolling-origin forecasts over a range")
    _add_common_io(p_back)
    _add_model_flags(p_back)
    p_back.add_argument("--trends", help="batch manifest of search-volume files")
    p_back.add_argument("--from", dest="start", required=True, type=_saturday,
                        help="first forecast origin (Saturday)")
    p_back.add_argument("--to", dest="end", required=True, type=_saturday,
                        help="last forecast origin (Saturday)")
    p_back.set_defaults(func=cmd_backtest)

    p_eval = sub.add_parser("evaluate", help="error tables, tests and curves for forecast CSVs")
    _add_common_io(p_eval)
    p_eval.add_argument("--forecasts", action="append", required=True,
                        metavar="NAME=PATH",
                        help="forecast CSV to evaluate; repeatable")
    p_eval.add_argument("--from", dest="start", type=_saturday, default=None,
                        help="first origin of the evaluation window")
    p_eval.add_argument("--to", dest="end", type=_saturday, default=None,
                        help="last target week of the evaluation window")
    p_eval.add_argument("--reference", help="method name for DM/CSSED comparisons (default: first track)")
    p_eval.add_argument("--plots", action="store_true", help="also write SVG line plots")
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="re-run the backtest over one parameter grid")
    _add_common_io(p_sweep)
    _add_model_flags(p_sweep)
    p_sweep.add_argument("--trends", help="batch manifest of search-volume files")
    p_sweep.add_argument("--from", dest="start", required=True, type=_saturday)
    p_sweep.add_argument("--to", dest="end", required=True, type=_saturday)
    p_sweep.add_argument("--param", required=True,
                         help="one of: w/discount, N/train-window, M/decomp-window, regularization")
    p_sweep.add_argument("--values", required=True, type=_float_list,
                         help="comma-separated parameter values")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"prism: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"prism: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"prism: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
