"""The forecast CSV format: one row per (origin, horizon).

Columns: origin_date, horizon, point, se, lo, hi, realized. Dates are
ISO-8601; absent optionals are empty fields. Externally produced tracks
(other methods' forecasts) use the same schema, so the evaluation stage
treats them identically.
"""

from __future__ import annotations

import csv
import math

from .errors import ParseError
from .pipeline import ForecastRecord
from .series import WeekStamp

COLUMNS = ["origin_date", "horizon", "point", "se", "lo", "hi", "realized"]


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


def write_forecast_csv(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        for rec in records:
            lo, hi = rec.interval if rec.interval is not None else (None, None)
            writer.writerow([
                rec.origin.isoformat(),
                rec.horizon,
                _fmt(rec.point),
                _fmt(rec.se),
                _fmt(lo),
                _fmt(hi),
                _fmt(rec.realized),
            ])


def _parse_optional(cell: str, path, line_no: int, column: str) -> float | None:
    text = cell.strip()
    if not text:
        return None
    try:
        value = float(text)
    except ValueError as exc:
        raise ParseError(f"non-numeric {column} {cell!r}", path=str(path), line=line_no) from exc
    if not math.isfinite(value):
        raise ParseError(f"non-finite {column} {cell!r}", path=str(path), line=line_no)
    return value


def read_forecast_csv(path) -> list[ForecastRecord]:
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc}", path=str(path)) from exc
    if not rows:
        raise ParseError("empty file", path=str(path))
    header = [c.strip().lower() for c in rows[0]]
    if header != COLUMNS:
        raise ParseError(f"expected header {COLUMNS}, got {rows[0]!r}", path=str(path), line=1)
    records: list[ForecastRecord] = []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(COLUMNS):
            raise ParseError(f"expected {len(COLUMNS)} columns, got {len(row)}", path=str(path), line=line_no)
        try:
            origin = WeekStamp.parse(row[0].strip())
        except ValueError as exc:
            raise ParseError(f"bad origin_date {row[0]!r}: {exc}", path=str(path), line=line_no) from exc
        try:
            horizon = int(row[1])
        except ValueError as exc:
            raise ParseError(f"bad horizon {row[1]!r}", path=str(path), line=line_no) from exc
        point = _parse_optional(row[2], path, line_no, "point")
        if point is None:
            raise ParseError("missing point forecast", path=str(path), line=line_no)
        se = _parse_optional(row[3], path, line_no, "se")
        lo = _parse_optional(row[4], path, line_no, "lo")
        hi = _parse_optional(row[5], path, line_no, "hi")
        realized = _parse_optional(row[6], path, line_no, "realized")
        if (lo is None) != (hi is None):
            raise ParseError("lo/hi must both be present or both empty", path=str(path), line=line_no)
        records.append(
            ForecastRecord(
                origin=origin,
                horizon=horizon,
                point=point,
                se=se,
                interval=(lo, hi) if lo is not None else None,
                realized=realized,
            )
        )
    return records
