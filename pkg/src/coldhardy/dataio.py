"""Ingestion of daily weather + LTE rows into season sequences.

Rows come from the AgWeatherNet-style CSV schema (one row per day per
cultivar). The pipeline is::

    parse_weather_csv -> group by cultivar -> extract_seasons -> filter_seasons
        -> interpolate features -> make_trial_splits -> fit_normalizer

Everything downstream (the neural models and the Ferguson baseline) consumes
``Season`` objects.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

COLUMNS = (
    "DATE", "CULTIVAR", "AWN_STATION",
    "MIN_AT", "AVG_AT", "MAX_AT", "MEAN_AT",
    "MIN_RH", "AVG_RH", "MAX_RH",
    "MIN_DEWPT", "AVG_DEWPT", "MAX_DEWPT",
    "P_INCHES", "WS_MPH", "MAX_WS_MPH",
    "LTE10", "LTE50", "LTE90",
)
WEATHER_COLUMNS = COLUMNS[3:16]
LTE_COLUMNS = ("LTE10", "LTE50", "LTE90")

# MEAN_AT is derived from MIN/MAX and only used by the Ferguson baseline.
DEFAULT_FEATURES = tuple(c for c in WEATHER_COLUMNS if c != "MEAN_AT")
TEMPERATURE_COLUMNS = ("MIN_AT", "AVG_AT", "MAX_AT")

SEASON_START = (9, 7)
SEASON_END = (5, 15)

MIN_LABEL_RATIO = 0.10
MIN_TEMPERATURE_RATIO = 0.90


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


@dataclass(frozen=True)
class DayRecord:
    """One day of weather plus optional LTE labels.

    ``values`` maps a CSV column name (``WEATHER_COLUMNS`` + ``LTE_COLUMNS``)
    to a float or ``None`` when the cell was empty.
    """

    date: dt.date
    values: dict = field(default_factory=dict)
    station: str = ""

    def get(self, column: str) -> float | None:
        return self.values.get(column)

    @property
    def min_at(self):
        return self.values.get("MIN_AT")

    @property
    def avg_at(self):
        return self.values.get("AVG_AT")

    @property
    def max_at(self):
        return self.values.get("MAX_AT")

    @property
    def mean_at(self):
        return self.values.get("MEAN_AT")

    @property
    def lte10(self):
        return self.values.get("LTE10")

    @property
    def lte50(self):
        return self.values.get("LTE50")

    @property
    def lte90(self):
        return self.values.get("LTE90")

    @property
    def label_present(self) -> tuple[bool, bool, bool]:
        return tuple(self.values.get(c) is not None for c in LTE_COLUMNS)

    @classmethod
    def empty(cls, date: dt.date) -> "DayRecord":
        return cls(date, {c: None for c in WEATHER_COLUMNS + LTE_COLUMNS})


def derive_mean_at(min_at: float, max_at: float) -> float:
    return (min_at + max_at) / 2


def _parse_float(text: str, row: int, column: str) -> float | None:
    text = text.strip()
    if text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row}, column {column}: non-numeric value {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {column}: non-finite value {text!r}")
    return value


def parse_weather_csv(data: bytes | str) -> list[tuple[str, DayRecord]]:
    """Parse a weather/LTE CSV into ``(cultivar name, DayRecord)`` pairs.

    Row numbers in error messages are 1-based file lines (header is line 1).
    Columns other than DATE may be missing from the header; they are treated
    as absent for every row.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8-sig")
    reader = csv.DictReader(io.StringIO(data))
    header = reader.fieldnames or []
    if "DATE" not in header:
        raise DataError("row 1, column DATE: mandatory column missing from header")

    out = []
    for lineno, row in enumerate(reader, start=2):
        raw_date = (row.get("DATE") or "").strip()
        try:
            date = dt.date.fromisoformat(raw_date)
        except ValueError:
            raise DataError(f"row {lineno}, column DATE: invalid date {raw_date!r}") from None
        values = {}
        for col in WEATHER_COLUMNS + LTE_COLUMNS:
            cell = row.get(col)
            values[col] = None if cell is None else _parse_float(cell, lineno, col)
        cultivar = (row.get("CULTIVAR") or "").strip()
        station = (row.get("AWN_STATION") or "").strip()
        out.append((cultivar, DayRecord(date, values, station)))
    return out


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def serialize_records(rows: Iterable[tuple[str, DayRecord]]) -> str:
    """Inverse of :func:`parse_weather_csv`; floats are written losslessly."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for cultivar, rec in rows:
        writer.writerow(
            [rec.date.isoformat(), cultivar, rec.station]
            + [_fmt(rec.values.get(c)) for c in WEATHER_COLUMNS + LTE_COLUMNS]
        )
    return buf.getvalue()


def interpolate_missing(series: Sequence[float | None], name: str = "feature") -> list[float]:
    """Fill gaps linearly between present neighbours; ends are held constant."""
    present = [i for i, v in enumerate(series) if v is not None]
    if not present:
        raise DataError(f"{name}: every value is missing, cannot interpolate")
    out = [float(v) if v is not None else 0.0 for v in series]
    first, last = present[0], present[-1]
    for i in range(first):
        out[i] = out[first]
    for i in range(last + 1, len(out)):
        out[i] = out[last]
    for left, right in zip(present, present[1:]):
        gap = right - left
        if gap > 1:
            a, b = out[left], out[right]
            for k in range(1, gap):
                out[left + k] = a + (b - a) * k / gap
    return out


def season_bounds(start_year: int) -> tuple[dt.date, dt.date]:
    return (
        dt.date(start_year, *SEASON_START),
        dt.date(start_year + 1, *SEASON_END),
    )


def season_length(start_year: int) -> int:
    first, last = season_bounds(start_year)
    return (last - first).days + 1


@dataclass(frozen=True)
class Season:
    """A Sept 7 - May 15 window for one cultivar.

    ``raw`` holds the ``WEATHER_COLUMNS`` with NaN for absent cells (no NaN
    once :meth:`interpolated` has run). ``labels`` is (T, 3) LTE10/50/90
    with NaN where the label was absent; labels are never interpolated.
    """

    cultivar_id: int
    start_year: int
    dates: tuple
    raw: np.ndarray  # (T, len(WEATHER_COLUMNS)), NaN = absent
    labels: np.ndarray  # (T, 3), NaN = absent

    @property
    def length(self) -> int:
        return len(self.dates)

    @property
    def mask(self) -> np.ndarray:
        return ~np.isnan(self.labels)

    def column(self, name: str) -> np.ndarray:
        return self.raw[:, WEATHER_COLUMNS.index(name)]

    def label_ratio(self) -> float:
        return float(np.count_nonzero(self.mask[:, 1])) / self.length

    def temperature_ratio(self) -> float:
        idx = [WEATHER_COLUMNS.index(c) for c in TEMPERATURE_COLUMNS]
        complete = ~np.isnan(self.raw[:, idx]).any(axis=1)
        return float(np.count_nonzero(complete)) / self.length

    def interpolated(self) -> "Season":
        """Copy of this season with every weather gap filled.

        MEAN_AT gaps are derived from the filled MIN/MAX where possible so the
        derived-mean relation stays exact.
        """
        raw = self.raw.copy()
        for j, col in enumerate(WEATHER_COLUMNS):
            if col == "MEAN_AT":
                continue
            seq = [None if math.isnan(v) else v for v in raw[:, j]]
            raw[:, j] = interpolate_missing(seq, f"{col} season {self.start_year}")
        mean_j = WEATHER_COLUMNS.index("MEAN_AT")
        derived = derive_mean_at(raw[:, WEATHER_COLUMNS.index("MIN_AT")],
                                 raw[:, WEATHER_COLUMNS.index("MAX_AT")])
        missing = np.isnan(raw[:, mean_j])
        raw[missing, mean_j] = derived[missing]
        return Season(self.cultivar_id, self.start_year, self.dates, raw, self.labels)

    def feature_matrix(self, features: Sequence[str] = DEFAULT_FEATURES) -> np.ndarray:
        return self.raw[:, [WEATHER_COLUMNS.index(c) for c in features]]

    def mean_at(self) -> np.ndarray:
        """Daily mean temperature as used by the Ferguson baseline."""
        return derive_mean_at(self.column("MIN_AT"), self.column("MAX_AT"))


def extract_seasons(records: Sequence[DayRecord], cultivar_id: int = 0) -> list[Season]:
    """Cut date-sorted records into Sept 7 - May 15 windows.

    Days absent from the source become all-NaN rows. Windows with no records
    are skipped.
    """
    if not records:
        return []
    by_date = {r.date: r for r in records}
    years = sorted({r.date.year for r in records})
    seasons = []
    for year in range(years[0] - 1, years[-1] + 1):
        first, last = season_bounds(year)
        n = (last - first).days + 1
        dates = tuple(first + dt.timedelta(days=k) for k in range(n))
        if not any(d in by_date for d in dates):
            continue
        raw = np.full((n, len(WEATHER_COLUMNS)), np.nan)
        labels = np.full((n, 3), np.nan)
        for k, d in enumerate(dates):
            rec = by_date.get(d)
            if rec is None:
                continue
            for j, col in enumerate(WEATHER_COLUMNS):
                v = rec.values.get(col)
                if v is not None:
                    raw[k, j] = v
            for j, col in enumerate(LTE_COLUMNS):
                v = rec.values.get(col)
                if v is not None:
                    labels[k, j] = v
        seasons.append(Season(cultivar_id, year, dates, raw, labels))
    return seasons


@dataclass(frozen=True)
class Rejection:
    cultivar_id: int
    start_year: int
    label_ratio: float
    temperature_ratio: float


def filter_seasons(seasons: Iterable[Season]) -> tuple[list[Season], list[Rejection]]:
    kept, log = [], []
    for s in seasons:
        lr, tr = s.label_ratio(), s.temperature_ratio()
        if lr >= MIN_LABEL_RATIO and tr >= MIN_TEMPERATURE_RATIO:
            kept.append(s)
        else:
            log.append(Rejection(s.cultivar_id, s.start_year, lr, tr))
    return kept, log


@dataclass(frozen=True)
class Cultivar:
    cultivar_id: int
    name: str
    seasons: tuple


@dataclass(frozen=True)
class Corpus:
    """Ordered cultivars with dense ids ``0..C-1``."""

    cultivars: tuple
    rejections: tuple = ()

    def __post_init__(self):
        for i, c in enumerate(self.cultivars):
            if c.cultivar_id != i:
                raise DataError(f"cultivar {c.name!r} has id {c.cultivar_id}, expected {i}")
            for s in c.seasons:
                if s.cultivar_id != i:
                    raise DataError(f"season {s.start_year} of {c.name!r} has id {s.cultivar_id}")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.cultivars]

    def __len__(self) -> int:
        return len(self.cultivars)

    def __getitem__(self, i: int) -> Cultivar:
        return self.cultivars[i]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def subset(self, ids: Sequence[int]) -> "Corpus":
        """Re-index the chosen cultivars densely, preserving the given order."""
        out = []
        for new_id, old in enumerate(ids):
            c = self.cultivars[old]
            seasons = tuple(_relabel(s, new_id) for s in c.seasons)
            out.append(Cultivar(new_id, c.name, seasons))
        return Corpus(tuple(out))


def _relabel(season: Season, cultivar_id: int) -> Season:
    return Season(cultivar_id, season.start_year, season.dates, season.raw, season.labels)


def build_corpus(rows: Iterable[tuple[str, DayRecord]], filter: bool = True) -> Corpus:
    """Group parsed rows by cultivar (first-appearance order) into a corpus.

    Retained seasons are interpolated; rejected ones are logged on the corpus.
    """
    grouped: dict[str, list[DayRecord]] = {}
    for name, rec in rows:
        grouped.setdefault(name, []).append(rec)
    cultivars, rejections = [], []
    for cid, (name, recs) in enumerate(grouped.items()):
        recs.sort(key=lambda r: r.date)
        seasons = extract_seasons(recs, cid)
        if filter:
            seasons, log = filter_seasons(seasons)
            rejections.extend(log)
        seasons = tuple(s.interpolated() for s in seasons)
        cultivars.append(Cultivar(cid, name, seasons))
    return Corpus(tuple(cultivars), tuple(rejections))


def load_corpus(paths: Sequence[str], filter: bool = True) -> Corpus:
    rows = []
    for p in paths:
        with open(p, "rb") as fh:
            rows.extend(parse_weather_csv(fh.read()))
    return build_corpus(rows, filter=filter)


@dataclass(frozen=True)
class TrialSplit:
    trial_index: int
    train: tuple  # per cultivar: tuple of season indices
    test: tuple
    seed: int


def make_trial_splits(corpus: Corpus, n_trials: int = 3, seed: int = 0,
                      n_test: int = 2) -> list[TrialSplit]:
    """Seeded test-pair selection per cultivar.

    One permutation per cultivar is drawn; trial ``k`` takes the ``k``-th
    consecutive pair (wrapping when the cultivar is too small), so trials
    have disjoint test sets whenever ``n_trials * n_test`` seasons exist.
    """
    for c in corpus.cultivars:
        if len(c.seasons) < n_test + 1:
            raise DataError(
                f"cultivar {c.name!r} has {len(c.seasons)} seasons; need at least {n_test + 1}"
            )
    perms = []
    for c in corpus.cultivars:
        rng = np.random.default_rng([seed, c.cultivar_id])
        perms.append([int(i) for i in rng.permutation(len(c.seasons))])

    splits = []
    for k in range(n_trials):
        train, test = [], []
        for c, perm in zip(corpus.cultivars, perms):
            n = len(perm)
            picks = tuple(sorted(perm[(k * n_test + j) % n] for j in range(n_test)))
            test.append(picks)
            train.append(tuple(i for i in range(n) if i not in picks))
        splits.append(TrialSplit(k, tuple(train), tuple(test), seed))
    return splits


@dataclass(frozen=True)
class FeatureStats:
    names: tuple
    mean: np.ndarray
    sd: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.sd

    def invert(self, z: np.ndarray) -> np.ndarray:
        return z * self.sd + self.mean


def fit_normalizer(seasons: Iterable[Season],
                   features: Sequence[str] = DEFAULT_FEATURES) -> FeatureStats:
    """Population z-score statistics over every day of the given seasons."""
    mats = [s.feature_matrix(features) for s in seasons]
    if not mats:
        raise DataError("no training seasons to fit normalizer on")
    x = np.concatenate(mats, axis=0)
    if np.isnan(x).any():
        raise DataError("normalizer input contains missing values; interpolate first")
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    for name, s in zip(features, sd):
        if not s > 0:
            raise DataError(f"feature {name} has zero variance on training data")
    return FeatureStats(tuple(features), mean, sd)


def apply_normalizer(stats: FeatureStats, season: Season) -> np.ndarray:
    return stats.apply(season.feature_matrix(stats.names))
