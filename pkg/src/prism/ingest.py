"""Parsers for the two external data formats, plus the batch schedule.

Claims: a two-column CSV (DATE,ICNSA by default) of weekly releases.
Search volumes: per-term two-column CSVs or one multi-column CSV per batch,
integer values 0..100, one batch per <=5-year download window. All dates are
mapped onto the week-ending-Saturday grid at parse time; the claims grid is
authoritative. Batches are declared in a manifest rather than inferred from
file names.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    BatchTooLong,
    GapError,
    GridMismatch,
    NonSaturdayGrid,
    OutOfRangeValue,
    ParseError,
    UncoveredOrigin,
)
from .pipeline import PrismConfig
from .series import ExogenousPanel, WeeklySeries, WeekStamp, week_ending_saturday

MAX_BATCH_WEEKS = 262  # five years of weekly rows


def _read_rows(path) -> list[list[str]]:
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            return list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc}", path=str(path)) from exc


def _parse_date(cell: str, path, line: int) -> dt.date:
    try:
        return dt.date.fromisoformat(cell.strip())
    except ValueError as exc:
        raise ParseError(f"bad date {cell!r}", path=str(path), line=line) from exc


def _saturday_grid(dates: list[dt.date], path) -> list[WeekStamp]:
    """Map a constant-weekday date column onto week-ending Saturdays."""
    weekdays = {d.weekday() for d in dates}
    if len(weekdays) > 1:
        raise NonSaturdayGrid(
            f"{path}: rows mix weekdays and cannot sit on one weekly grid"
        )
    return [WeekStamp(week_ending_saturday(d)) for d in dates]


def _check_weekly(weeks: list[WeekStamp], path) -> None:
    for a, b in zip(weeks, weeks[1:]):
        step = b - a
        if step <= 0:
            raise ParseError(
                f"dates not strictly increasing near {b.isoformat()}", path=str(path)
            )
        if step != 1:
            raise GapError(
                f"{path}: missing week(s) between {a.isoformat()} and {b.isoformat()}"
            )


def parse_claims_csv(path, date_column: str = "DATE", value_column: str = "ICNSA") -> WeeklySeries:
    """Weekly claims releases as a Saturday-grid series.

    Column names are matched case-insensitively; pass aliases for exports
    with different headers. Missing-value markers (e.g. ".") are malformed
    rows, reported with their line number.
    """
    rows = _read_rows(path)
    if not rows:
        raise ParseError("empty file", path=str(path))
    header = [c.strip().lower() for c in rows[0]]
    try:
        date_idx = header.index(date_column.lower())
        value_idx = header.index(value_column.lower())
    except ValueError:
        raise ParseError(
            f"expected columns {date_column!r} and {value_column!r}, got {rows[0]!r}",
            path=str(path), line=1,
        ) from None
    dates: list[dt.date] = []
    values: list[float] = []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) <= max(date_idx, value_idx):
            raise ParseError(f"too few columns: {row!r}", path=str(path), line=line_no)
        dates.append(_parse_date(row[date_idx], path, line_no))
        cell = row[value_idx].strip()
        try:
            value = float(cell)
        except ValueError as exc:
            raise ParseError(f"non-numeric value {cell!r}", path=str(path), line=line_no) from exc
        if not np.isfinite(value):
            raise ParseError(f"non-finite value {cell!r}", path=str(path), line=line_no)
        values.append(value)
    if not dates:
        raise ParseError("no data rows", path=str(path))
    weeks = _saturday_grid(dates, path)
    _check_weekly(weeks, path)
    return WeeklySeries(weeks[0], values)


@dataclass(frozen=True)
class TrendsBatch:
    """One batch of search-volume series, normalized within its window."""

    batch_id: str
    coverage: tuple[WeekStamp, WeekStamp]
    panel: ExogenousPanel

    def __post_init__(self):
        first, last = self.coverage
        span = last - first + 1
        if span > MAX_BATCH_WEEKS:
            raise BatchTooLong(
                f"batch {self.batch_id!r} spans {span} weeks (> {MAX_BATCH_WEEKS})"
            )
        if self.panel.start != first or self.panel.end != last:
            raise ValueError("panel range disagrees with declared coverage")

    @property
    def first_week(self) -> WeekStamp:
        return self.coverage[0]

    @property
    def last_week(self) -> WeekStamp:
        return self.coverage[1]


def _parse_volume(cell: str, path, line_no: int) -> float:
    text = cell.strip()
    try:
        value = float(text)
    except ValueError as exc:
        raise ParseError(f"non-numeric search volume {cell!r}", path=str(path), line=line_no) from exc
    if value != int(value):
        raise ParseError(f"search volume {cell!r} is not an integer", path=str(path), line=line_no)
    if not 0 <= value <= 100:
        raise OutOfRangeValue(f"search volume {cell!r} outside 0..100", path=str(path), line=line_no)
    return value


def _parse_trends_file(path) -> tuple[list[WeekStamp], list[str], np.ndarray]:
    rows = _read_rows(path)
    if not rows:
        raise ParseError("empty file", path=str(path))
    header = [c.strip() for c in rows[0]]
    if len(header) < 2 or header[0].lower() != "date":
        raise ParseError(f"expected 'date,<term>,...' header, got {rows[0]!r}", path=str(path), line=1)
    terms = header[1:]
    dates: list[dt.date] = []
    matrix: list[list[float]] = []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} columns, got {len(row)}", path=str(path), line=line_no)
        dates.append(_parse_date(row[0], path, line_no))
        matrix.append([_parse_volume(c, path, line_no) for c in row[1:]])
    if not dates:
        raise ParseError("no data rows", path=str(path))
    weeks = _saturday_grid(dates, path)
    _check_weekly(weeks, path)
    return weeks, terms, np.asarray(matrix, dtype=float)


def parse_trends_batch(paths: Sequence, batch_id: str) -> TrendsBatch:
    """Assemble one batch from per-term files or a single multi-column file.

    All files must share the same weekly grid exactly.
    """
    if not paths:
        raise ParseError(f"batch {batch_id!r} lists no files")
    all_terms: list[str] = []
    blocks: list[np.ndarray] = []
    grid: list[WeekStamp] | None = None
    grid_path = None
    for path in paths:
        weeks, terms, block = _parse_trends_file(path)
        if grid is None:
            grid = weeks
            grid_path = path
        elif weeks != grid:
            raise GridMismatch(
                f"{path} covers {weeks[0].isoformat()}..{weeks[-1].isoformat()} but "
                f"{grid_path} covers {grid[0].isoformat()}..{grid[-1].isoformat()}"
            )
        all_terms.extend(terms)
        blocks.append(block)
    panel = ExogenousPanel(grid[0], all_terms, np.hstack(blocks), batch_id=batch_id)
    return TrendsBatch(batch_id=batch_id, coverage=(grid[0], grid[-1]), panel=panel)


# ---------------------------------------------------------------------------
# batch manifest
# ---------------------------------------------------------------------------

def parse_batch_manifest(path) -> list[TrendsBatch]:
    """Read a manifest of batches and parse every file it names.

    Format: blank-line-separated stanzas of key=value lines with keys
    batch_id, start, end, files (comma-separated paths relative to the
    manifest); '#' starts a comment. The declared start/end must match the
    parsed data exactly.
    """
    manifest_path = Path(path)
    try:
        text = manifest_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read manifest: {exc}", path=str(path)) from exc
    stanzas: list[dict[str, str]] = []
    current: dict[str, str] = {}
    current_lines: dict[str, int] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            if current:
                stanzas.append(current)
                current = {}
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {raw!r}", path=str(path), line=line_no)
        key, value = line.split("=", 1)
        key = key.strip().lower()
        if key in current:
            raise ParseError(f"duplicate key {key!r} in stanza", path=str(path), line=line_no)
        current[key] = value.strip()
        current_lines[key] = line_no
    if current:
        stanzas.append(current)
    if not stanzas:
        raise ParseError("manifest declares no batches", path=str(path))

    batches: list[TrendsBatch] = []
    for stanza in stanzas:
        missing = {"batch_id", "start", "end", "files"} - set(stanza)
        if missing:
            raise ParseError(
                f"stanza for {stanza.get('batch_id', '?')!r} missing keys: {sorted(missing)}",
                path=str(path),
            )
        try:
            declared_start = WeekStamp.parse(stanza["start"])
            declared_end = WeekStamp.parse(stanza["end"])
        except ValueError as exc:
            raise ParseError(f"bad coverage date: {exc}", path=str(path)) from exc
        files = [
            (manifest_path.parent / f.strip()) for f in stanza["files"].split(",") if f.strip()
        ]
        batch = parse_trends_batch(files, stanza["batch_id"])
        if batch.first_week != declared_start or batch.last_week != declared_end:
            raise ParseError(
                f"batch {batch.batch_id!r} data covers {batch.first_week.isoformat()}.."
                f"{batch.last_week.isoformat()} but manifest declares "
                f"{declared_start.isoformat()}..{declared_end.isoformat()}",
                path=str(path),
            )
        batches.append(batch)
    ids = [b.batch_id for b in batches]
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate batch_id in manifest", path=str(path))
    return batches


# ---------------------------------------------------------------------------
# schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BatchSchedule:
    """Which batch serves each forecast origin."""

    assignments: dict  # WeekStamp -> TrendsBatch

    def batch_for(self, origin: WeekStamp) -> TrendsBatch:
        try:
            return self.assignments[origin]
        except KeyError:
            raise UncoveredOrigin(f"no batch assigned for origin {origin.isoformat()}") from None

    def panel_for(self, origin: WeekStamp) -> ExogenousPanel:
        return self.batch_for(origin).panel


def build_schedule(
    batches: Sequence[TrendsBatch],
    backtest_range: tuple[WeekStamp, WeekStamp],
    cfg: PrismConfig,
) -> BatchSchedule:
    """Assign every origin the freshest batch covering its needs.

    A batch qualifies when it contains the origin itself and the exogenous
    rows of every training window, i.e. weeks back to origin -
    (train_window + max horizon). Among qualifying batches the one with the
    latest start wins. Decomposition history is not batch-constrained: it
    consumes only the target series.
    """
    start, end = backtest_range
    if end < start:
        raise ValueError("backtest range is empty")
    lookback = cfg.train_window + cfg.max_horizon
    assignments: dict[WeekStamp, TrendsBatch] = {}
    for i in range(end - start + 1):
        origin = start + i
        earliest_needed = origin - lookback
        eligible = [
            b for b in batches
            if b.first_week <= earliest_needed and b.last_week >= origin
        ]
        if not eligible:
            raise UncoveredOrigin(
                f"no batch covers origin {origin.isoformat()} "
                f"(needs {earliest_needed.isoformat()}..{origin.isoformat()})"
            )
        assignments[origin] = max(eligible, key=lambda b: (b.first_week, b.last_week))
    return BatchSchedule(assignments)
