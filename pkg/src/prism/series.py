"""Weekly date arithmetic and the fundamental series containers.

Everything downstream runs on one canonical grid: weeks identified by their
ending Saturday (the reporting convention for initial claims). Series are
gapless by construction; a missing week is a hard error, never imputed.
All containers are immutable after construction and safe to share.
"""

from __future__ import annotations

import datetime as dt
from typing import Iterator, Sequence

import numpy as np

from .errors import GapError, NoOverlap, OutOfRange

_SATURDAY = 5  # datetime.date.weekday() value
_WEEK = dt.timedelta(days=7)


def week_ending_saturday(d: dt.date) -> dt.date:
    """The Saturday ending the week that starts on or contains `d`.

    Identity for Saturdays; a Sunday week-start maps 6 days forward.
    """
    return d + dt.timedelta(days=(_SATURDAY - d.weekday()) % 7)


class WeekStamp:
    """A reporting week, identified by its week-ending Saturday."""

    __slots__ = ("saturday",)

    def __init__(self, saturday: dt.date):
        if not isinstance(saturday, dt.date) or isinstance(saturday, dt.datetime):
            raise TypeError("WeekStamp expects a datetime.date")
        if saturday.weekday() != _SATURDAY:
            raise ValueError(f"{saturday.isoformat()} is not a Saturday")
        object.__setattr__(self, "saturday", saturday)

    @classmethod
    def parse(cls, text: str) -> "WeekStamp":
        return cls(dt.date.fromisoformat(text))

    @classmethod
    def for_date(cls, d: dt.date) -> "WeekStamp":
        """The stamp of the week whose ending Saturday is on or after `d`."""
        return cls(week_ending_saturday(d))

    def __setattr__(self, name, value):
        raise AttributeError("WeekStamp is immutable")

    def __add__(self, weeks: int) -> "WeekStamp":
        if not isinstance(weeks, (int, np.integer)):
            return NotImplemented
        return WeekStamp(self.saturday + int(weeks) * _WEEK)

    __radd__ = __add__

    def __sub__(self, other):
        """stamp - stamp -> whole weeks; stamp - int -> stamp."""
        if isinstance(other, WeekStamp):
            return (self.saturday - other.saturday).days // 7
        if isinstance(other, (int, np.integer)):
            return self + (-int(other))
        return NotImplemented

    def __eq__(self, other):
        return isinstance(other, WeekStamp) and self.saturday == other.saturday

    def __lt__(self, other: "WeekStamp"):
        return self.saturday < other.saturday

    def __le__(self, other: "WeekStamp"):
        return self.saturday <= other.saturday

    def __gt__(self, other: "WeekStamp"):
        return self.saturday > other.saturday

    def __ge__(self, other: "WeekStamp"):
        return self.saturday >= other.saturday

    def __hash__(self):
        return hash(self.saturday)

    def __repr__(self):
        return f"WeekStamp({self.saturday.isoformat()})"

    def isoformat(self) -> str:
        return self.saturday.isoformat()


def _as_float_array(values, allow_non_finite: bool) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError("values must be one-dimensional")
    if arr.size < 1:
        raise ValueError("a weekly series needs at least one value")
    if not allow_non_finite and not np.all(np.isfinite(arr)):
        raise ValueError("non-finite values in weekly series")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


class WeeklySeries:
    """A gapless, date-indexed univariate weekly series.

    `allow_non_finite` exists only for diagnostics (e.g. poisoning future
    weeks with NaN to prove an operation never reads them); production data
    must be finite.
    """

    __slots__ = ("start", "values")

    def __init__(self, start: WeekStamp, values, *, allow_non_finite: bool = False):
        if not isinstance(start, WeekStamp):
            raise TypeError("start must be a WeekStamp")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "values", _as_float_array(values, allow_non_finite))

    def __setattr__(self, name, value):
        raise AttributeError("WeeklySeries is immutable")

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def end(self) -> WeekStamp:
        return self.start + (len(self) - 1)

    def weeks(self) -> Iterator[WeekStamp]:
        for i in range(len(self)):
            yield self.start + i

    def contains(self, week: WeekStamp) -> bool:
        return self.start <= week <= self.end

    def index_of(self, week: WeekStamp) -> int:
        if not self.contains(week):
            raise OutOfRange(f"{week.isoformat()} outside {self.start.isoformat()}..{self.end.isoformat()}")
        return week - self.start

    def value_at(self, week: WeekStamp) -> float:
        return float(self.values[self.index_of(week)])

    def slice(self, first: WeekStamp, last: WeekStamp) -> "WeeklySeries":
        """Contiguous sub-series covering first..last inclusive."""
        if last < first:
            raise OutOfRange(f"empty slice: {first.isoformat()} > {last.isoformat()}")
        i = self.index_of(first)
        j = self.index_of(last)
        return WeeklySeries(first, np.asarray(self.values[i:j + 1]), allow_non_finite=True)

    def __eq__(self, other):
        return (
            isinstance(other, WeeklySeries)
            and self.start == other.start
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    def __hash__(self):
        return hash((self.start, self.values.tobytes()))

    def __repr__(self):
        return f"WeeklySeries({self.start.isoformat()}, n={len(self)})"


class ExogenousPanel:
    """Search-volume regressors on a common weekly grid.

    Values from a Trends export lie in [0, 100]; the batch_id names the
    5-year download window whose normalization makes them comparable.
    """

    __slots__ = ("start", "terms", "matrix", "batch_id")

    def __init__(self, start: WeekStamp, terms: Sequence[str], matrix, batch_id: str = "default"):
        if not isinstance(start, WeekStamp):
            raise TypeError("start must be a WeekStamp")
        terms = tuple(str(t) for t in terms)
        if len(terms) < 1:
            raise ValueError("panel needs at least one term")
        arr = np.asarray(matrix, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != len(terms):
            raise ValueError(f"matrix must be (T, {len(terms)})")
        if arr.shape[0] < 1:
            raise ValueError("panel needs at least one week")
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite values in exogenous panel")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "matrix", arr)
        object.__setattr__(self, "batch_id", str(batch_id))

    def __setattr__(self, name, value):
        raise AttributeError("ExogenousPanel is immutable")

    def __len__(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def end(self) -> WeekStamp:
        return self.start + (len(self) - 1)

    def contains(self, week: WeekStamp) -> bool:
        return self.start <= week <= self.end

    def index_of(self, week: WeekStamp) -> int:
        if not self.contains(week):
            raise OutOfRange(f"{week.isoformat()} outside {self.start.isoformat()}..{self.end.isoformat()}")
        return week - self.start

    def row_at(self, week: WeekStamp) -> np.ndarray:
        return self.matrix[self.index_of(week)]

    def slice(self, first: WeekStamp, last: WeekStamp) -> "ExogenousPanel":
        if last < first:
            raise OutOfRange(f"empty slice: {first.isoformat()} > {last.isoformat()}")
        i = self.index_of(first)
        j = self.index_of(last)
        return ExogenousPanel(first, self.terms, np.asarray(self.matrix[i:j + 1]), self.batch_id)

    def shifted(self, weeks: int) -> "ExogenousPanel":
        """Same values relabelled `weeks` later (negative: earlier)."""
        if weeks == 0:
            return self
        return ExogenousPanel(self.start + weeks, self.terms, np.asarray(self.matrix), self.batch_id)

    def __repr__(self):
        return f"ExogenousPanel({self.start.isoformat()}, n={len(self)}, p={self.n_terms}, batch={self.batch_id!r})"


def align(y: WeeklySeries, x: ExogenousPanel, offset_weeks: int = 0) -> tuple[WeeklySeries, ExogenousPanel]:
    """Restrict both inputs to their maximal overlap after shifting x.

    The panel's weeks are relabelled `offset_weeks` later before
    intersecting with the target's range; both outputs share a start and
    length. Raises NoOverlap when the shifted ranges are disjoint.
    """
    xs = x.shifted(offset_weeks)
    first = max(y.start, xs.start)
    last = min(y.end, xs.end)
    if last < first:
        raise NoOverlap(
            f"target {y.start.isoformat()}..{y.end.isoformat()} and shifted panel "
            f"{xs.start.isoformat()}..{xs.end.isoformat()} do not overlap"
        )
    return y.slice(first, last), xs.slice(first, last)


def series_from_pairs(pairs: Sequence[tuple[dt.date, float]]) -> WeeklySeries:
    """Build a series from (date, value) rows already mapped to Saturdays.

    Enforces the gapless 7-day grid; raises GapError naming the first hole.
    """
    if not pairs:
        raise ValueError("no rows")
    start = WeekStamp(pairs[0][0])
    prev = start
    for d, _ in pairs[1:]:
        cur = WeekStamp(d)
        step = cur - prev
        if step != 1:
            raise GapError(
                f"weekly grid broken between {prev.isoformat()} and {cur.isoformat()} "
                f"({step} week step)"
            )
        prev = cur
    return WeeklySeries(start, [v for _, v in pairs])
