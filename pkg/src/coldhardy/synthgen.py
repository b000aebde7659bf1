"""Synthetic cultivar families with known hardiness dynamics.

Weather is shared across cultivars for a given year (one station), and each
cultivar's LTE50 curve is produced by the Ferguson model under a perturbed
copy of a shared base parameter set. The hidden parameters and noise-free
curves are returned alongside the corpus so tests have exact truths.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np

from .dataio import (
    LTE_COLUMNS,
    WEATHER_COLUMNS,
    Corpus,
    Cultivar,
    DayRecord,
    Season,
    derive_mean_at,
    season_bounds,
)
from .ferguson import FergusonParams, ferguson_predict

SPREAD_10 = 1.5
SPREAD_90 = 1.5
BASE_YEAR = 1990


@dataclass(frozen=True)
class SynthSpec:
    n_cultivars: int = 6
    seasons_per_cultivar: tuple = (8, 8, 8, 8, 8, 8)
    base_params: FergusonParams = field(default_factory=FergusonParams)
    perturbation: float = 0.15
    label_period: int = 7
    noise_sd: float = 0.0
    seed: int = 0
    feature_missing_rate: float = 0.0
    first_year: int = BASE_YEAR

    def problems(self) -> list[str]:
        out = []
        if self.n_cultivars < 1:
            out.append("n_cultivars must be >= 1")
        if len(self.seasons_per_cultivar) != self.n_cultivars:
            out.append("seasons_per_cultivar needs one entry per cultivar")
        if any(n < 0 for n in self.seasons_per_cultivar):
            out.append("season counts must be >= 0")
        if self.label_period < 1:
            out.append("label_period must be >= 1")
        if self.noise_sd < 0:
            out.append("noise_sd must be >= 0")
        if self.perturbation < 0:
            out.append("perturbation must be >= 0")
        if not 0 <= self.feature_missing_rate < 1:
            out.append("feature_missing_rate must be in [0, 1)")
        out.extend(self.base_params.problems())
        return out


def _day_of_year_phase(dates) -> np.ndarray:
    doy = np.array([d.timetuple().tm_yday for d in dates], dtype=np.float64)
    return 2 * np.pi * (doy - 200.0) / 365.25


def generate_weather(seed: int, start_year: int) -> tuple[tuple, np.ndarray]:
    """One season of daily weather, columns in ``WEATHER_COLUMNS`` order.

    Annual cosine temperature cycle (warmest mid-July) plus AR(1) anomalies.
    """
    first, last = season_bounds(start_year)
    n = (last - first).days + 1
    dates = tuple(first + dt.timedelta(days=k) for k in range(n))
    rng = np.random.default_rng([seed, start_year])

    anomaly = np.empty(n)
    a = rng.normal(0.0, 3.5)
    for i in range(n):
        a = 0.7 * a + rng.normal(0.0, 3.5 * math.sqrt(1 - 0.49))
        anomaly[i] = a
    mean = 11.0 + 13.0 * np.cos(_day_of_year_phase(dates)) + anomaly
    half_range = 0.5 * np.clip(rng.normal(12.0, 2.5, n), 4.0, 20.0)
    min_at = mean - half_range
    max_at = mean + half_range
    avg_at = np.clip(mean + rng.normal(0.0, 1.0, n), min_at, max_at)

    avg_rh = np.clip(70.0 - 1.5 * (avg_at - 10.0) + rng.normal(0, 8, n), 5.0, 100.0)
    min_rh = np.clip(avg_rh - np.abs(rng.normal(18, 5, n)), 0.0, avg_rh)
    max_rh = np.clip(avg_rh + np.abs(rng.normal(15, 5, n)), avg_rh, 100.0)

    def dewpoint(t, rh):
        g = np.log(np.maximum(rh, 1.0) / 100.0) + 17.62 * t / (243.12 + t)
        return 243.12 * g / (17.62 - g)

    avg_dew = dewpoint(avg_at, avg_rh)
    min_dew = np.minimum(dewpoint(min_at, min_rh), avg_dew)
    max_dew = np.maximum(dewpoint(max_at, max_rh), avg_dew)

    wet = rng.random(n) < 0.3
    precip = np.where(wet, rng.exponential(0.15, n), 0.0)
    wind = rng.gamma(2.0, 2.5, n)
    max_wind = wind + rng.gamma(2.0, 3.0, n)

    cols = {
        "MIN_AT": min_at, "AVG_AT": avg_at, "MAX_AT": max_at,
        "MEAN_AT": derive_mean_at(min_at, max_at),
        "MIN_RH": min_rh, "AVG_RH": avg_rh, "MAX_RH": max_rh,
        "MIN_DEWPT": min_dew, "AVG_DEWPT": avg_dew, "MAX_DEWPT": max_dew,
        "P_INCHES": precip, "WS_MPH": wind, "MAX_WS_MPH": max_wind,
    }
    return dates, np.column_stack([cols[c] for c in WEATHER_COLUMNS])


def perturb_params(base: FergusonParams, scale: float, rng) -> FergusonParams:
    """Per-cultivar jitter that stays inside the valid parameter region."""
    if scale == 0:
        return base
    z = [float(v) for v in rng.normal(size=9)]
    h_min = base.h_min + 3.0 * scale * z[5]
    h_max = min(base.h_max + 1.0 * scale * z[6], -1.0)
    h_min = min(h_min, h_max - 5.0)
    p = FergusonParams(
        t_th=base.t_th + 2.0 * scale * z[0],
        k_a_endo=base.k_a_endo * math.exp(scale * z[1]),
        k_a_eco=base.k_a_eco * math.exp(scale * z[2]),
        k_d_endo=base.k_d_endo * math.exp(scale * z[3]),
        k_d_eco=base.k_d_eco * math.exp(scale * z[4]),
        h_min=h_min,
        h_max=h_max,
        c_star=base.c_star * math.exp(scale * z[7]),
        theta=base.theta * math.exp(scale * z[8]),
        h_init=h_max,
    )
    assert p.is_valid(), p.problems()
    return p


@dataclass
class SynthCorpus:
    corpus: Corpus
    truths: list  # FergusonParams per cultivar
    clean: list  # per cultivar: list of (T,) noise-free LTE50 arrays
    source: list  # per cultivar: seasons as emitted to CSV, gaps included
    station: str = "SYNTH.1"

    def rows(self):
        """(cultivar name, DayRecord) rows in the public CSV schema."""
        for c, seasons in zip(self.corpus.cultivars, self.source):
            for s in seasons:
                for k, d in enumerate(s.dates):
                    values = {}
                    for j, col in enumerate(WEATHER_COLUMNS):
                        v = s.raw[k, j]
                        values[col] = None if math.isnan(v) else float(v)
                    for j, col in enumerate(LTE_COLUMNS):
                        v = s.labels[k, j]
                        values[col] = None if math.isnan(v) else float(v)
                    yield c.name, DayRecord(d, values, self.station)


def generate_corpus(spec: SynthSpec) -> SynthCorpus:
    problems = spec.problems()
    if problems:
        raise ValueError("invalid SynthSpec: " + "; ".join(problems))

    param_rng = np.random.default_rng([spec.seed, 1])
    truths = [perturb_params(spec.base_params, spec.perturbation, param_rng)
              for _ in range(spec.n_cultivars)]

    cultivars, clean_all, source_all = [], [], []
    for cid, (truth, n_seasons) in enumerate(zip(truths, spec.seasons_per_cultivar)):
        seasons, clean = [], []
        for k in range(n_seasons):
            year = spec.first_year + k
            dates, raw = generate_weather(spec.seed, year)
            curve = ferguson_predict(derive_mean_at(raw[:, 0], raw[:, 2]), truth)
            n = len(dates)
            observed = np.zeros(n, dtype=bool)
            observed[::spec.label_period] = True
            noise_rng = np.random.default_rng([spec.seed, 2, cid, year])
            noise = noise_rng.normal(0.0, 1.0, (n, 3)) * spec.noise_sd
            labels = np.full((n, 3), np.nan)
            labels[observed, 0] = curve[observed] + SPREAD_10 + noise[observed, 0]
            labels[observed, 1] = curve[observed] + noise[observed, 1]
            labels[observed, 2] = curve[observed] - SPREAD_90 + noise[observed, 2]
            if spec.feature_missing_rate > 0:
                raw = raw.copy()
                hole_rng = np.random.default_rng([spec.seed, 3, cid, year])
                holes = hole_rng.random(raw.shape) < spec.feature_missing_rate
                holes[0] = holes[-1] = False
                raw[holes] = np.nan
            seasons.append(Season(cid, year, dates, raw, labels))
            clean.append(curve)
        ready = tuple(s.interpolated() for s in seasons)
        cultivars.append(Cultivar(cid, f"synth_{cid:02d}", ready))
        clean_all.append(clean)
        source_all.append(seasons)
    return SynthCorpus(Corpus(tuple(cultivars)), truths, clean_all, source_all)


def truths_to_dict(sc: SynthCorpus) -> dict:
    return {
        c.name: dataclasses.asdict(p) for c, p in zip(sc.corpus.cultivars, sc.truths)
    }
