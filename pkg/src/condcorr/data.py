"""Loading, aligning and transforming raw daily series into an estimation panel."""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import logging
import math
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import FetchError, InputError

logger = logging.getLogger(__name__)

__all__ = [
    "RawSeries",
    "TransformSpec",
    "AlignedPanel",
    "parse_series_csv",
    "load_series_csv",
    "fetch_remote_series",
    "align_panel",
    "apply_transform",
    "window_series",
    "write_panel_csv",
    "read_panel_csv",
    "cache_path",
]

_DATE_FORMATS = ("%Y-%m-%d", "%m/%d/%Y")
MIN_ESTIMATION_LENGTH = 30


def _parse_date(text):
    text = text.strip()
    for fmt in _DATE_FORMATS:
        try:
            return dt.datetime.strptime(text, fmt).date()
        except ValueError:
            continue
    return None


def _parse_value(text):
    try:
        value = float(text)
    except (TypeError, ValueError):
        return None
    return value if math.isfinite(value) else None


@dataclass(frozen=True)
class RawSeries:
    name: str
    dates: np.ndarray  # datetime64[D], strictly increasing
    values: np.ndarray
    source: str = ""
    dropped: int = 0

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        values = np.asarray(self.values, dtype=np.float64)
        if dates.shape != values.shape or dates.ndim != 1:
            raise InputError(f"{self.name}: dates and values must be 1-d and of equal length")
        if len(dates) > 1 and np.any(np.diff(dates).astype(np.int64) <= 0):
            raise InputError(f"{self.name}: timestamps must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise InputError(f"{self.name}: non-finite values stored as data")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class TransformSpec:
    use_log: bool = False
    differencing_order: int = 0

    def __post_init__(self):
        if self.differencing_order not in (0, 1):
            raise InputError(f"differencing_order must be 0 or 1, got {self.differencing_order}")

    @property
    def label(self):
        return ("log" if self.use_log else "level") + ("+diff" if self.differencing_order else "")


@dataclass(frozen=True)
class AlignedPanel:
    """Date-indexed T x N matrix of observed series.

    Panels are immutable; every transformation returns a new instance.  The
    ``T >= 30`` guard is enforced at estimation time (see :meth:`require_estimable`)
    so that small panels can still be built and inspected.
    """

    dates: np.ndarray
    matrix: np.ndarray
    names: tuple
    transforms: tuple = field(default=None)

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        matrix = np.array(self.matrix, dtype=np.float64)
        names = tuple(self.names)
        if matrix.ndim != 2 or matrix.shape != (len(dates), len(names)):
            raise InputError(
                f"panel matrix shape {matrix.shape} does not match {len(dates)} dates x {len(names)} names"
            )
        if len(set(names)) != len(names):
            raise InputError("series names must be unique")
        if not np.all(np.isfinite(matrix)):
            raise InputError("aligned panel contains missing entries")
        transforms = self.transforms
        if transforms is None:
            transforms = tuple(TransformSpec() for _ in names)
        transforms = tuple(transforms)
        if len(transforms) != len(names):
            raise InputError("one TransformSpec per series is required")
        matrix.setflags(write=False)
        dates.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "transforms", transforms)

    @property
    def shape(self):
        return self.matrix.shape

    def column(self, name):
        return self.matrix[:, self.names.index(name)]

    def require_estimable(self, min_length=MIN_ESTIMATION_LENGTH):
        if self.matrix.shape[0] < min_length:
            raise InputError(
                f"panel has T={self.matrix.shape[0]} observations, estimation needs at least {min_length}"
            )
        return self


def parse_series_csv(text, date_column, value_column, name=None, source=""):
    """Parse CSV text into a :class:`RawSeries`.

    Rows whose date or value cannot be parsed are dropped and counted in
    ``RawSeries.dropped``.  Duplicate dates are an error.
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise InputError(f"{source or 'csv'}: empty input, header row required")
    header = [h.strip() for h in reader.fieldnames]
    reader.fieldnames = header
    for col in (date_column, value_column):
        if col not in header:
            raise InputError(f"{source or 'csv'}: missing column {col!r} (have {header})")
    rows = {}
    dropped = 0
    for row in reader:
        date = _parse_date(row.get(date_column) or "")
        value = _parse_value(row.get(value_column))
        if date is None or value is None:
            dropped += 1
            continue
        if date in rows:
            raise InputError(f"{source or 'csv'}: duplicate timestamp {date.isoformat()}")
        rows[date] = value
    if not rows:
        raise InputError(f"{source or 'csv'}: zero parseable rows")
    ordered = sorted(rows)
    if dropped:
        logger.info("%s: dropped %d unparseable rows", source or name, dropped)
    return RawSeries(
        name=name or value_column,
        dates=np.array(ordered, dtype="datetime64[D]"),
        values=np.array([rows[d] for d in ordered]),
        source=source,
        dropped=dropped,
    )


def load_series_csv(path, date_column="date", value_column="value", name=None):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    text = path.read_text(encoding="utf-8-sig")
    return parse_series_csv(text, date_column, value_column, name=name or path.stem, source=str(path))


def cache_path(url, cache_dir):
    return Path(cache_dir) / hashlib.sha256(url.encode("utf-8")).hexdigest()


def fetch_remote_series(url, date_column="date", value_column="value", name=None,
                        cache_dir=".condcorr-cache", timeout=30.0):
    """Fetch a CSV endpoint, caching the raw response bytes per URL.

    A cached response is served without touching the network, which makes a
    pipeline run replayable offline.  HTTP and connection failures raise
    :class:`FetchError` and never write to the cache.
    """
    target = cache_path(url, cache_dir)
    if target.is_file():
        payload = target.read_bytes()
        _check_csv_payload(payload, url)
    else:
        try:
            with urllib.request.urlopen(url, timeout=timeout) as resp:
                payload = resp.read()
        except urllib.error.HTTPError as exc:
            raise FetchError(f"fetch failed: {url} returned HTTP {exc.code}",
                             retriable=exc.code >= 500) from exc
        except (urllib.error.URLError, OSError) as exc:
            raise FetchError(f"fetch failed: {url}: {exc}") from exc
        _check_csv_payload(payload, url)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(payload)
    return parse_series_csv(payload.decode("utf-8-sig"), date_column, value_column,
                            name=name or value_column, source=url)


def _check_csv_payload(payload, url):
    try:
        text = payload.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise InputError(f"{url}: response is not CSV text") from exc
    head = text.lstrip()[:256].lower()
    if not head or head.startswith("<") or "," not in head.splitlines()[0]:
        raise InputError(f"{url}: response is not CSV")


def window_series(series, start=None, end=None):
    """Restrict a series to ``start <= date <= end`` (inclusive)."""
    mask = np.ones(len(series), dtype=bool)
    if start is not None:
        mask &= series.dates >= np.datetime64(start, "D")
    if end is not None:
        mask &= series.dates <= np.datetime64(end, "D")
    return RawSeries(series.name, series.dates[mask], series.values[mask], series.source, series.dropped)


def align_panel(series: Sequence[RawSeries], policy="inner_join"):
    """Keep exactly the dates observed in every series; column order as given."""
    if policy != "inner_join":
        raise InputError(f"unsupported alignment policy {policy!r}")
    if len(series) < 2:
        raise InputError("alignment needs at least two series")
    common = series[0].dates
    for s in series[1:]:
        common = np.intersect1d(common, s.dates, assume_unique=True)
    if common.size == 0:
        raise InputError("empty intersection: the series share no dates")
    cols = []
    for s in series:
        idx = np.searchsorted(s.dates, common)
        cols.append(s.values[idx])
    return AlignedPanel(common, np.column_stack(cols), tuple(s.name for s in series))


def apply_transform(panel, specs):
    """Apply per-series log and differencing.

    Differencing drops the first ``max(differencing_order)`` rows from every
    column so the panel stays rectangular.
    """
    if isinstance(specs, TransformSpec):
        specs = [specs] * len(panel.names)
    specs = list(specs)
    if len(specs) != len(panel.names):
        raise InputError(f"got {len(specs)} transform specs for {len(panel.names)} series")
    lag = max(s.differencing_order for s in specs)
    cols = []
    for j, spec in enumerate(specs):
        x = panel.matrix[:, j]
        if spec.use_log:
            if np.any(x <= 0.0):
                raise InputError(f"{panel.names[j]}: log requested on a column with non-positive values")
            x = np.log(x)
        if spec.differencing_order == 1:
            x = np.diff(x)
        cols.append(x[len(x) - (panel.matrix.shape[0] - lag):])
    matrix = np.column_stack(cols) if cols else np.empty((panel.matrix.shape[0] - lag, 0))
    return AlignedPanel(panel.dates[lag:], matrix, panel.names, tuple(specs))


def _fmt(value):
    return repr(float(value))


def write_panel_csv(path_or_buffer, dates, matrix, names):
    """Write ``date`` plus one column per series (RFC-4180, CRLF line ends)."""
    matrix = np.asarray(matrix)
    own = not hasattr(path_or_buffer, "write")
    fh = open(path_or_buffer, "w", newline="", encoding="utf-8") if own else path_or_buffer
    try:
        writer = csv.writer(fh)
        writer.writerow(["date", *names])
        for d, row in zip(np.asarray(dates, dtype="datetime64[D]"), matrix):
            writer.writerow([str(d), *(_fmt(v) for v in row)])
    finally:
        if own:
            fh.close()


def read_panel_csv(path):
    """Read a panel CSV written by :func:`write_panel_csv`."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if not header or header[0].strip().lower() != "date" or len(header) < 2:
            raise InputError(f"{path}: expected 'date' as the first column")
        dates, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            d = _parse_date(row[0])
            if d is None:
                raise InputError(f"{path}:{lineno}: unparseable date {row[0]!r}")
            try:
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
            if len(values) != len(header) - 1:
                raise InputError(f"{path}:{lineno}: expected {len(header) - 1} values")
            dates.append(d)
            rows.append(values)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return AlignedPanel(np.array(dates, dtype="datetime64[D]"), np.array(rows),
                        tuple(h.strip() for h in header[1:]))
