"""Exception hierarchy.

Two branches matter to callers: :class:`DataError` (malformed, inconsistent,
or insufficient input) and :class:`NumericalError` (a numeric procedure could
not produce a valid result). The CLI maps them to exit codes 2 and 3.
"""


class PrismError(Exception):
    """Base class for every error raised by this package."""


class DataError(PrismError):
    """Bad or insufficient input data."""


class NumericalError(PrismError):
    """A numerical procedure failed to produce a valid result."""


# --- weekly-series plumbing ------------------------------------------------

class NoOverlap(DataError):
    """Two weekly ranges do not intersect."""


class OutOfRange(DataError):
    """A requested week or range falls outside a series."""


class GapError(DataError):
    """A weekly grid is missing one or more weeks."""


class NonSaturdayGrid(DataError):
    """Input dates do not sit on a single weekday grid mappable to Saturdays."""


# --- decomposition ---------------------------------------------------------

class SeriesTooShort(DataError):
    """The series is shorter than the decomposition requires."""


class InsufficientHistory(DataError):
    """Not enough history before the requested week."""


# --- penalized regression --------------------------------------------------

class FoldTooSmall(DataError):
    """Cross-validation folds cannot be populated."""


# --- forecasting pipeline --------------------------------------------------

class InsufficientVintage(DataError):
    """A vintage decomposition is too short to supply the requested lags."""


class MissingVintage(DataError):
    """No vintage decomposition available for a required week."""


class InsufficientTrack(DataError):
    """Too few realized forecasts to estimate a predictive standard error."""


# --- evaluation ------------------------------------------------------------

class EmptyTrack(DataError):
    """No forecast records at the requested horizon."""


class GridMismatch(DataError):
    """Forecast tracks do not share the same (origin, horizon) grid."""


class ZeroReferenceError(NumericalError):
    """Relative errors are undefined against a zero-error reference."""


class DegenerateDifferential(NumericalError):
    """The loss differential has no variance; the test statistic is undefined."""


class TrackTooShort(DataError):
    """Too few observations for the requested test."""


class TooFew(DataError):
    """Too few values for the requested diagnostic."""


# --- ingestion -------------------------------------------------------------

class ParseError(DataError):
    """A file could not be parsed; carries the offending location."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc += str(path)
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class OutOfRangeValue(ParseError):
    """A search-volume value falls outside the 0..100 export range."""


class BatchTooLong(DataError):
    """A search-volume batch spans more than the 5-year download limit."""


class UncoveredOrigin(DataError):
    """No batch covers a forecast origin's exogenous data needs."""
