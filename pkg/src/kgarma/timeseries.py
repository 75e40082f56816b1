"""Series container, CSV ingestion, simple transforms and descriptive statistics."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import IO, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .errors import DataError

__all__ = [
    "TimeSeries",
    "CsvSchema",
    "StatsSummary",
    "MinMaxScaler",
    "load_csv",
    "save_csv",
    "log_returns",
    "normalize",
    "describe",
    "jarque_bera",
    "format_float",
]


def format_float(x: float) -> str:
    """17 significant digits; parses back to the identical double."""
    return format(float(x), ".17g")


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled real-valued observations.

    ``values`` is stored as a read-only float array; ``start_time`` and
    ``step`` locate observation ``i`` at ``start_time + i * step``.
    """

    values: np.ndarray
    start_time: datetime = datetime(1970, 1, 1)
    step: timedelta = timedelta(hours=1)
    label: str = ""

    def __post_init__(self):
        arr = _frozen(self.values)
        if arr.ndim != 1:
            raise DataError("series values must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise DataError(f"non-finite value at index {bad}")
        if self.step <= timedelta(0):
            raise DataError("step must be a positive duration")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.shape[0]

    def timestamp(self, i: int) -> datetime:
        return self.start_time + i * self.step

    @property
    def end_time(self) -> datetime:
        return self.timestamp(len(self) - 1)

    def with_values(self, values, offset: int = 0, label: Optional[str] = None) -> "TimeSeries":
        """New series sharing the time grid, starting ``offset`` steps later."""
        return TimeSeries(
            values,
            self.timestamp(offset),
            self.step,
            self.label if label is None else label,
        )

    def slice(self, start: int, stop: int) -> "TimeSeries":
        return self.with_values(self.values[start:stop], offset=start)


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for :func:`load_csv`.

    Columns may be given by header name or by zero-based position.
    ``fill_policy`` is ``None`` (gaps are an error) or ``"ffill"``.
    """

    time_column: Union[str, int] = 0
    value_column: Union[str, int] = 1
    header: bool = True
    fill_policy: Optional[str] = None
    label: str = ""


def _open_text(source) -> Tuple[IO[str], bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8", newline=""), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8")), True
    if isinstance(source, io.TextIOBase):
        return source, False
    # assume a binary stream
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def _parse_time(text: str, row: int) -> datetime:
    try:
        return datetime.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"row {row}: cannot parse timestamp {text!r}") from None


def _resolve_column(col: Union[str, int], header: Optional[Sequence[str]]) -> int:
    if isinstance(col, int):
        return col
    if header is None:
        raise DataError(f"column {col!r} given by name but the schema has no header")
    names = [h.strip() for h in header]
    if col not in names:
        raise DataError(f"column {col!r} not found in header {names}")
    return names.index(col)


def load_csv(source, schema: CsvSchema = CsvSchema()) -> TimeSeries:
    """Read a uniformly sampled series from UTF-8 CSV.

    Lines starting with ``#`` are treated as comments (provenance headers).
    Gaps in the time grid raise :class:`DataError` naming the first missing
    timestamp unless ``schema.fill_policy == "ffill"``.
    """
    stream, owned = _open_text(source)
    try:
        lines = [ln for ln in stream if ln.strip() and not ln.lstrip().startswith("#")]
    finally:
        if owned:
            stream.close()
    reader = csv.reader(lines)
    rows = list(reader)
    header = None
    first_row = 1
    if schema.header:
        if not rows:
            raise DataError("empty input: header expected")
        header = rows.pop(0)
        first_row = 2
    tcol = _resolve_column(schema.time_column, header)
    vcol = _resolve_column(schema.value_column, header)

    times, values = [], []
    for i, row in enumerate(rows):
        rowno = i + first_row
        if len(row) <= max(tcol, vcol):
            raise DataError(f"row {rowno}: expected at least {max(tcol, vcol) + 1} fields, got {len(row)}")
        times.append(_parse_time(row[tcol], rowno))
        try:
            v = float(row[vcol])
        except ValueError:
            raise DataError(f"row {rowno}: non-numeric value {row[vcol]!r}") from None
        if not np.isfinite(v):
            raise DataError(f"row {rowno}: non-finite value {row[vcol]!r}")
        values.append(v)

    if len(values) < 2:
        raise DataError("at least two observations are required")

    diffs = [b - a for a, b in zip(times, times[1:])]
    step = min(diffs)
    if step <= timedelta(0):
        idx = diffs.index(step)
        raise DataError(f"row {idx + first_row + 1}: timestamps not strictly increasing")

    filled = [values[0]]
    for i, dt in enumerate(diffs):
        ratio, rem = divmod(dt, step)
        if rem != timedelta(0):
            raise DataError(f"row {i + first_row + 1}: non-uniform step {dt} (base step {step})")
        if ratio > 1:
            if schema.fill_policy != "ffill":
                missing = times[i] + step
                raise DataError(f"gap in series: missing timestamp {missing.isoformat()}")
            filled.extend([filled[-1]] * (ratio - 1))
        filled.append(values[i + 1])

    return TimeSeries(np.asarray(filled), times[0], step, schema.label)


def save_csv(series: TimeSeries, dest, header: Sequence[str] = ("t", "value"),
             comments: Sequence[str] = ()) -> None:
    """Write ``series`` as CSV with ISO-8601 timestamps and 17-digit values."""
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    buf.write(",".join(header) + "\n")
    for i, v in enumerate(series.values):
        buf.write(f"{series.timestamp(i).isoformat()},{format_float(v)}\n")
    text = buf.getvalue()
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        dest.write(text)


def log_returns(series: TimeSeries) -> TimeSeries:
    p = series.values
    if p.shape[0] < 2:
        raise DataError("log returns need at least two prices")
    nonpos = np.flatnonzero(p <= 0)
    if nonpos.size:
        raise DataError(f"non-positive price at index {int(nonpos[0])}")
    lp = np.log(p)
    return series.with_values(lp[1:] - lp[:-1], offset=1)


@dataclass(frozen=True)
class MinMaxScaler:
    """Affine map of ``[y_min, y_max]`` onto ``[0, 1]``."""

    y_min: float
    y_max: float

    def __post_init__(self):
        if not self.y_max > self.y_min:
            raise DataError("min-max scaling needs y_max > y_min")

    @classmethod
    def fit(cls, values) -> "MinMaxScaler":
        v = np.asarray(values, dtype=float)
        return cls(float(v.min()), float(v.max()))

    @property
    def span(self) -> float:
        return self.y_max - self.y_min

    def transform(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.y_min) / self.span

    def inverse_transform(self, values) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.span + self.y_min


def normalize(values) -> Tuple[np.ndarray, MinMaxScaler]:
    v = np.asarray(values, dtype=float)
    if v.size == 0 or v.max() == v.min():
        raise DataError("cannot normalize a constant (or empty) vector")
    scaler = MinMaxScaler.fit(v)
    return scaler.transform(v), scaler


@dataclass(frozen=True)
class StatsSummary:
    mean: float
    std_dev: float
    skewness: float
    kurtosis: float
    excess_kurtosis: bool
    jarque_bera: float
    jb_p_value: float
    n: int
    notes: Tuple[str, ...] = field(default=())


def _moments(x: np.ndarray) -> Tuple[float, float, float]:
    dev = x - x.mean()
    m2 = float(np.mean(dev**2))
    if m2 == 0.0:
        raise DataError("zero variance: skewness and kurtosis undefined")
    skew = float(np.mean(dev**3) / m2**1.5)
    kurt = float(np.mean(dev**4) / m2**2)
    return m2, skew, kurt


def jarque_bera(values) -> Tuple[float, float]:
    """JB = n/6 (S^2 + (K-3)^2/4) with an asymptotic chi-square(2) p-value."""
    x = np.asarray(values, dtype=float)
    if x.shape[0] < 4:
        raise DataError("Jarque-Bera needs at least four observations")
    _, s, k = _moments(x)
    jb = x.shape[0] / 6.0 * (s**2 + (k - 3.0) ** 2 / 4.0)
    return float(jb), float(stats.chi2.sf(jb, 2))


def describe(series: Union[TimeSeries, Sequence[float], np.ndarray], excess: bool = False) -> StatsSummary:
    """Moment-based summary statistics.

    Kurtosis is raw (normal = 3) unless ``excess`` is set; the Jarque-Bera
    statistic always uses the raw value against the benchmark 3.
    """
    x = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    if x.shape[0] < 4:
        raise DataError("describe needs at least four observations")
    _, skew, kurt = _moments(x)
    jb, p = jarque_bera(x)
    return StatsSummary(
        mean=float(x.mean()),
        std_dev=float(x.std(ddof=1)),
        skewness=skew,
        kurtosis=kurt - 3.0 if excess else kurt,
        excess_kurtosis=excess,
        jarque_bera=jb,
        jb_p_value=p,
        n=int(x.shape[0]),
    )
