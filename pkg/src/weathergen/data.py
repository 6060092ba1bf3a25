"""Daily weather ingestion, the model-space transform, standardization, windows.

Model space reorders each day to (radn, mint, diff, rain) with
diff = maxt - mint, so a positive-support head on diff enforces
maxt >= mint by construction. Exact zeros in radn/diff/rain are replaced
by a small floor because the gamma likelihood has no mass at zero.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from .errors import (
    ConstraintError,
    DataError,
    DegenerateDataError,
    DomainError,
    GapError,
)

MODEL_VARIABLES = ("radn", "mint", "diff", "rain")
RAW_VARIABLES = ("radn", "mint", "maxt", "rain")
DEFAULT_ZERO_FLOOR = 1e-3


@dataclass(frozen=True)
class DailyRecord:
    """One observed day: radiation (MJ/m^2), temperatures (degC), rain (mm)."""

    day: date
    radn: float
    mint: float
    maxt: float
    rain: float

    def __post_init__(self):
        if self.maxt < self.mint:
            raise ConstraintError(f"{self.day}: maxt {self.maxt} < mint {self.mint}")
        if self.radn < 0.0:
            raise ConstraintError(f"{self.day}: radn {self.radn} < 0")
        if self.rain < 0.0:
            raise ConstraintError(f"{self.day}: rain {self.rain} < 0")


class WeatherSeries:
    """Gap-free daily series starting at ``start_date``; values held as arrays."""

    def __init__(self, start_date, radn, mint, maxt, rain, name="", latitude=float("nan")):
        self.start_date = start_date
        self.radn = np.asarray(radn, dtype=np.float64)
        self.mint = np.asarray(mint, dtype=np.float64)
        self.maxt = np.asarray(maxt, dtype=np.float64)
        self.rain = np.asarray(rain, dtype=np.float64)
        self.name = name
        self.latitude = latitude
        n = len(self.radn)
        for label, a in (("mint", self.mint), ("maxt", self.maxt), ("rain", self.rain)):
            if len(a) != n:
                raise DataError(f"{label} has {len(a)} values, radn has {n}")
        bad = np.flatnonzero(self.maxt < self.mint)
        if bad.size:
            i = int(bad[0])
            raise ConstraintError(f"{self.date_at(i)}: maxt {self.maxt[i]} < mint {self.mint[i]}")
        if np.any(self.radn < 0.0):
            raise ConstraintError("radn contains negative values")
        if np.any(self.rain < 0.0):
            raise ConstraintError("rain contains negative values")

    def __len__(self):
        return len(self.radn)

    @property
    def end_date(self):
        return self.start_date + timedelta(days=len(self) - 1)

    def date_at(self, i):
        return self.start_date + timedelta(days=int(i))

    def index_of(self, day):
        i = (day - self.start_date).days
        if not 0 <= i < len(self):
            raise DataError(f"{day} outside series range {self.start_date}..{self.end_date}")
        return i

    def record_at(self, i):
        return DailyRecord(self.date_at(i), float(self.radn[i]), float(self.mint[i]),
                           float(self.maxt[i]), float(self.rain[i]))

    def slice(self, start, stop):
        return WeatherSeries(self.date_at(start), self.radn[start:stop], self.mint[start:stop],
                             self.maxt[start:stop], self.rain[start:stop], self.name, self.latitude)


@dataclass
class TransformedSeries:
    """Model-space day vectors as a (4, N) array in MODEL_VARIABLES order."""

    values: np.ndarray
    start_date: date
    zero_floor: float = DEFAULT_ZERO_FLOOR

    def __len__(self):
        return self.values.shape[1]

    @property
    def end_date(self):
        return self.start_date + timedelta(days=len(self) - 1)

    def date_at(self, i):
        return self.start_date + timedelta(days=int(i))

    def tail(self, n):
        return TransformedSeries(self.values[:, len(self) - n :], self.date_at(len(self) - n), self.zero_floor)


@dataclass(frozen=True)
class StandardizationStats:
    """Per-variable mean/std fitted on the training range; std is population (divide by N)."""

    means: np.ndarray
    stds: np.ndarray
    fitted_start: date
    fitted_end: date
    convention: str = "population"

    def standardize(self, values):
        return (values - self.means[:, None]) / self.stds[:, None]

    def standardize_day(self, day):
        return (np.asarray(day, dtype=np.float64) - self.means) / self.stds


@dataclass
class TrainingWindowSet:
    """Sliding length-T windows: input days 1..T-1, target days t0+1..T (1-based)."""

    series: TransformedSeries
    T: int
    t0: int
    offsets: np.ndarray = field(init=False)

    def __post_init__(self):
        n = len(self.series)
        if n < self.T:
            raise DataError(f"insufficient data: series length {n} < window length T={self.T}")
        if not 0 < self.t0 < self.T:
            raise DataError(f"t0 must satisfy 0 < t0 < T, got t0={self.t0}, T={self.T}")
        self.offsets = np.arange(n - self.T + 1)

    def __len__(self):
        return len(self.offsets)

    @property
    def horizon(self):
        return self.T - self.t0

    def input_window(self, k):
        o = int(self.offsets[k])
        return self.series.values[:, o : o + self.T - 1]

    def target_window(self, k):
        o = int(self.offsets[k])
        return self.series.values[:, o + self.t0 : o + self.T]


def parse_weather_csv(text):
    """Parse header-led daily weather CSV into a WeatherSeries.

    Needs columns date,radn,mint,maxt,rain; ISO-8601 dates on strictly
    consecutive days. Optional name/latitude come from the caller, not the file.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    reader = csv.DictReader(io.StringIO(text))
    required = {"date", "radn", "mint", "maxt", "rain"}
    if reader.fieldnames is None or not required.issubset(set(reader.fieldnames)):
        raise DataError(f"header must name columns {sorted(required)}, got {reader.fieldnames}")
    days, radn, mint, maxt, rain = [], [], [], [], []
    prev = None
    for rownum, row in enumerate(reader, start=1):
        try:
            d = date.fromisoformat(row["date"].strip())
            vals = [float(row[c]) for c in ("radn", "mint", "maxt", "rain")]
        except (ValueError, TypeError) as e:
            raise DataError(f"row {rownum}: cannot parse ({e})") from None
        if prev is not None:
            gap = (d - prev).days
            if gap != 1:
                if gap <= 0:
                    raise DataError(f"row {rownum}: dates not ascending ({prev} then {d})")
                missing = prev + timedelta(days=1)
                raise GapError(f"missing day(s) between {prev} and {d}, first missing {missing}")
        if vals[2] < vals[1]:
            raise ConstraintError(f"row {rownum} ({d}): maxt {vals[2]} < mint {vals[1]}")
        if vals[0] < 0.0 or vals[3] < 0.0:
            raise ConstraintError(f"row {rownum} ({d}): negative radn or rain")
        prev = d
        days.append(d)
        radn.append(vals[0])
        mint.append(vals[1])
        maxt.append(vals[2])
        rain.append(vals[3])
    if not days:
        raise DataError("no data rows")
    return WeatherSeries(days[0], radn, mint, maxt, rain)


def write_weather_csv(series):
    """Inverse of parse_weather_csv (fixed %.6g formatting)."""
    lines = ["date,radn,mint,maxt,rain"]
    for i in range(len(series)):
        lines.append(
            f"{series.date_at(i).isoformat()},{series.radn[i]:.6g},{series.mint[i]:.6g},"
            f"{series.maxt[i]:.6g},{series.rain[i]:.6g}"
        )
    return "\n".join(lines) + "\n"


def to_model_space(series, zero_floor=DEFAULT_ZERO_FLOOR):
    """(radn, mint, maxt, rain) -> (radn, mint, diff, rain) with zero replacement.

    Exact zeros in radn, diff and rain become ``zero_floor`` so the gamma
    heads stay inside their support; mint is untouched.
    """
    values = np.stack([series.radn, series.mint, series.maxt - series.mint, series.rain])
    for row in (0, 2, 3):
        values[row, values[row] == 0.0] = zero_floor
    return TransformedSeries(values, series.start_date, zero_floor)


def from_model_space(day):
    """One model-space day vector back to (radn, mint, maxt, rain)."""
    radn, mint, diff, rain = (float(v) for v in day)
    if diff <= 0.0:
        raise DomainError(f"diff must be positive, got {diff}")
    if radn <= 0.0 or rain <= 0.0:
        raise DomainError(f"radn and rain must be positive, got radn={radn}, rain={rain}")
    return radn, mint, mint + diff, rain


def split_by_date(series, boundary):
    """Split so train ends at boundary (inclusive), test starts the next day."""
    if not series.start_date <= boundary <= series.end_date:
        raise DataError(f"boundary {boundary} outside series range {series.start_date}..{series.end_date}")
    cut = series.index_of(boundary) + 1
    return series.slice(0, cut), series.slice(cut, len(series))


def fit_standardization(train):
    """Per-variable mean and population std over the training series."""
    if len(train) < 2:
        raise DataError(f"need at least 2 days to fit standardization, got {len(train)}")
    means = train.values.mean(axis=1)
    stds = train.values.std(axis=1)  # population: divide by N
    flat = np.flatnonzero(stds == 0.0)
    if flat.size:
        names = ", ".join(MODEL_VARIABLES[i] for i in flat)
        raise DegenerateDataError(f"zero variance in {names}; cannot standardize")
    return StandardizationStats(means, stds, train.start_date, train.end_date)


def make_windows(series, T, t0):
    """All length-T sliding windows of a transformed series: N - T + 1 of them."""
    return TrainingWindowSet(series, T, t0)
