"""Stage-dependent thermal-time cold-hardiness baseline and its grid tuner.

This is a reconstruction of a Ferguson-style dynamic model, not the
published equations. Each day:

    DD_h = max(0, T - T_th),  DD_c = min(0, T - T_th)
    C   <- C + DD_c                     (chilling, <= 0)
    stage becomes eco once C <= C_star
    DP  = min(1, |C| / |C_star|) ** theta
    dH  = k_a[stage] * DD_c * (H - H_min) / (H_max - H_min)
        + k_d[stage] * DD_h * DP * (H_max - H) / (H_max - H_min)
    H   <- clamp(H + dH, H_min, H_max)
"""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .dataio import Season

log = logging.getLogger(__name__)

PARAM_ORDER = (
    "t_th", "k_a_endo", "k_a_eco", "k_d_endo", "k_d_eco",
    "h_min", "h_max", "c_star", "theta", "h_init",
)

DEFAULT_GRID = {
    "t_th": [0.0, 3.0, 5.0, 7.0, 10.0],
    "k_a_endo": [0.02, 0.05, 0.1, 0.2],
    "k_a_eco": [0.02, 0.05, 0.1, 0.2],
    "k_d_endo": [0.02, 0.05, 0.1, 0.2],
    "k_d_eco": [0.02, 0.05, 0.1, 0.2],
    "h_min": [-30.0, -25.0, -20.0],
    "h_max": [-3.0, -5.0],
    "c_star": [-300.0, -500.0, -700.0],
    "theta": [1.0, 2.0],
}


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class FergusonParams:
    t_th: float = 5.0
    k_a_endo: float = 0.1
    k_a_eco: float = 0.05
    k_d_endo: float = 0.02
    k_d_eco: float = 0.1
    h_min: float = -25.0
    h_max: float = -3.0
    c_star: float = -500.0
    theta: float = 2.0
    h_init: float | None = None  # defaults to h_max

    def __post_init__(self):
        if self.h_init is None:
            object.__setattr__(self, "h_init", self.h_max)

    def problems(self) -> list[str]:
        out = []
        if not self.h_min < self.h_max < 0:
            out.append("need h_min < h_max < 0")
        if not self.c_star < 0:
            out.append("need c_star < 0")
        for name in ("k_a_endo", "k_a_eco", "k_d_endo", "k_d_eco"):
            if getattr(self, name) < 0:
                out.append(f"{name} must be >= 0")
        if not self.theta > 0:
            out.append("theta must be > 0")
        if not self.h_min <= self.h_init <= self.h_max:
            out.append("h_init must lie in [h_min, h_max]")
        return out

    def is_valid(self) -> bool:
        return not self.problems()

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_ORDER], dtype=np.float64)

    @classmethod
    def from_array(cls, row) -> "FergusonParams":
        return cls(**{n: float(v) for n, v in zip(PARAM_ORDER, row)})

    def to_text(self, rmse: float | None = None) -> str:
        lines = [f"{n} = {getattr(self, n)!r}" for n in PARAM_ORDER]
        if rmse is not None:
            lines.append(f"rmse = {rmse!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> tuple["FergusonParams", float | None]:
        values, rmse = {}, None
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            key = key.strip()
            if key == "rmse":
                rmse = float(val)
            elif key in PARAM_ORDER:
                values[key] = float(val)
            else:
                raise GridError(f"unknown parameter {key!r}")
        return cls(**values), rmse


@dataclass(frozen=True)
class FergusonState:
    h: float
    c: float = 0.0
    eco: bool = False


def thermal_time(t_mean: float, t_th: float) -> tuple[float, float]:
    diff = t_mean - t_th
    return max(0.0, diff), min(0.0, diff)


def ferguson_step(state: FergusonState, t_mean: float, p: FergusonParams) -> FergusonState:
    """One day of the reference (scalar) dynamics."""
    dd_h, dd_c = thermal_time(t_mean, p.t_th)
    c = state.c + dd_c
    eco = state.eco or c <= p.c_star
    dp = min(1.0, abs(c) / abs(p.c_star)) ** p.theta
    span = p.h_max - p.h_min
    f_a = (state.h - p.h_min) / span
    f_d = (p.h_max - state.h) / span
    k_a = p.k_a_eco if eco else p.k_a_endo
    k_d = p.k_d_eco if eco else p.k_d_endo
    h = state.h + (k_a * dd_c * f_a + k_d * dd_h * dp * f_d)
    return FergusonState(min(max(h, p.h_min), p.h_max), c, eco)


def predict_reference(t_mean: Sequence[float], p: FergusonParams) -> np.ndarray:
    """Slow scalar prediction; kept as an oracle for the kernels."""
    state = FergusonState(p.h_init)
    out = np.empty(len(t_mean))
    for i, t in enumerate(t_mean):
        state = ferguson_step(state, float(t), p)
        out[i] = state.h
    return out


def _mean_temperature(season_or_tmean) -> np.ndarray:
    if isinstance(season_or_tmean, Season):
        t = season_or_tmean.mean_at()
    else:
        t = np.asarray(season_or_tmean, dtype=np.float64)
    if np.isnan(t).any():
        raise ValueError("daily mean temperature missing after interpolation")
    return np.ascontiguousarray(t, dtype=np.float64)


def ferguson_predict(season, p: FergusonParams) -> np.ndarray:
    """Predicted LTE50 for every day of a season (or a raw MEAN_AT vector)."""
    t = _mean_temperature(season)
    return kernels.simulate(t, p.as_array()[None, :])[0]


def expand_grid(grid: Mapping[str, Sequence[float]]) -> tuple[np.ndarray, list[tuple]]:
    """Cartesian product in lexicographic index order.

    Returns the valid parameter rows and their grid index vectors. Missing
    axes use the ``FergusonParams`` defaults; ``h_init`` follows ``h_max``
    unless given.
    """
    unknown = set(grid) - set(PARAM_ORDER)
    if unknown:
        raise GridError(f"unknown grid keys: {sorted(unknown)}")
    defaults = FergusonParams()
    axes = []
    for name in PARAM_ORDER:
        if name in grid:
            vals = [float(v) for v in grid[name]]
            if not vals:
                raise GridError(f"grid axis {name} is empty")
        elif name == "h_init":
            vals = [math.nan]
        else:
            vals = [getattr(defaults, name)]
        axes.append(vals)

    rows, index = [], []
    skipped = 0
    for idx in itertools.product(*(range(len(a)) for a in axes)):
        vals = {n: axes[k][i] for k, (n, i) in enumerate(zip(PARAM_ORDER, idx))}
        if math.isnan(vals["h_init"]):
            vals["h_init"] = None
        p = FergusonParams(**vals)
        problems = p.problems()
        if problems:
            skipped += 1
            log.info("skipping grid point %s: %s", idx, "; ".join(problems))
            continue
        rows.append(p.as_array())
        index.append(idx)
    if skipped:
        log.warning("skipped %d invalid grid points", skipped)
    if not rows:
        raise GridError("grid has no valid points")
    return np.array(rows), index


def _pack(seasons: Sequence[Season]):
    temps, targets, starts = [], [], [0]
    for s in seasons:
        temps.append(_mean_temperature(s))
        targets.append(s.labels[:, 1])
        starts.append(starts[-1] + s.length)
    return (np.ascontiguousarray(np.concatenate(temps)),
            np.asarray(starts, dtype=np.int64),
            np.ascontiguousarray(np.concatenate(targets), dtype=np.float64))


@dataclass
class GridResult:
    params: FergusonParams
    rmse: float
    index: tuple
    all_rmse: np.ndarray
    points: np.ndarray

    def within_steps(self, truth: FergusonParams, grid: Mapping[str, Sequence[float]],
                     steps: int = 1) -> dict[str, bool]:
        """Per-axis check that the result is within ``steps`` grid positions of ``truth``."""
        out = {}
        for k, name in enumerate(PARAM_ORDER):
            if name not in grid:
                continue
            vals = [float(v) for v in grid[name]]
            true_pos = int(np.argmin([abs(v - getattr(truth, name)) for v in vals]))
            out[name] = abs(self.index[k] - true_pos) <= steps
        return out


def evaluate_grid(seasons: Sequence[Season], points: np.ndarray, jobs: int = 1,
                  backend: str | None = None) -> np.ndarray:
    """RMSE on LTE50 for every parameter row, pooled over the seasons."""
    tmean, starts, target = _pack(seasons)
    n_labels = int(np.count_nonzero(~np.isnan(target)))
    if n_labels == 0:
        raise ValueError("no LTE50 labels in the tuning seasons")
    sse_fn = kernels.grid_sse if backend is None else kernels.get_backend(backend)[1]
    points = np.ascontiguousarray(points, dtype=np.float64)
    if jobs <= 1 or len(points) < 2 * jobs:
        sse = sse_fn(tmean, starts, target, points)
    else:
        chunks = np.array_split(np.arange(len(points)), jobs)
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = pool.map(
                lambda ix: sse_fn(tmean, starts, target, np.ascontiguousarray(points[ix])),
                chunks,
            )
            sse = np.concatenate(list(parts))
    return np.sqrt(np.asarray(sse) / n_labels)


def grid_search(seasons: Sequence[Season], grid: Mapping[str, Sequence[float]] | None = None,
                jobs: int = 1, backend: str | None = None) -> GridResult:
    """Exhaustive search for the parameter row with the lowest LTE50 RMSE.

    Ties resolve to the lexicographically smallest grid index vector, which
    is the first minimiser in product order, independent of ``jobs``.
    """
    points, index = expand_grid(DEFAULT_GRID if grid is None else grid)
    rmse = evaluate_grid(seasons, points, jobs=jobs, backend=backend)
    best = int(np.argmin(rmse))
    return GridResult(FergusonParams.from_array(points[best]), float(rmse[best]),
                      index[best], rmse, points)


def parse_grid_text(text: str) -> dict[str, list[float]]:
    """Read ``key = v1, v2, ...`` lines (brackets optional)."""
    grid = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise GridError(f"malformed grid line {line!r}")
        key = key.strip()
        if key not in PARAM_ORDER:
            raise GridError(f"unknown grid key {key!r}")
        val = val.strip().strip("[]")
        grid[key] = [float(v) for v in val.split(",") if v.strip()]
    return grid


__all__ = [
    "FergusonParams", "FergusonState", "thermal_time", "ferguson_step",
    "ferguson_predict", "predict_reference", "grid_search", "evaluate_grid",
    "expand_grid", "parse_grid_text", "DEFAULT_GRID", "PARAM_ORDER",
]
