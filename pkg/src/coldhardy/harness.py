"""Training loops, metrics and the four experiment suites.

Every suite returns an :class:`ExperimentResult` holding long-format rows
(one per trial, cultivar and model), a summary table whose layout follows the
corresponding results table, and the per-day predictions behind each RMSE.
Results are deterministic functions of (corpus, config, seed); ``jobs`` only
changes how trials are scheduled.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import ferguson
from .dataio import (
    DEFAULT_FEATURES,
    Corpus,
    DataError,
    FeatureStats,
    Season,
    TrialSplit,
    fit_normalizer,
    make_trial_splits,
)
from .models import DESK_FC, DESK_GRU, PAPER_FC, PAPER_GRU, Model, ModelSpec, finetune
from .ndiff import AdamState, NumericError, adam_step, masked_mse

log = logging.getLogger(__name__)

MTL_VARIANTS = ("MultE", "ConcatE", "AddE", "MultiH")
COMPARE_COLUMNS = ("MultE", "ConcatE", "AddE", "MultiH", "Single", "Ferguson")
SUBSET_COLUMNS = ("High", "Low", "Mix", "All", "Single")
TRANSFER_COLUMNS = ("ConcatE FT", "MultE FT", "AddE FT", "MultiH FT")
DEFAULT_SIZES = ("2", "5", "10", "20", "all")

REPORT_COLUMNS = ("experiment", "trial", "cultivar", "model", "rmse_lte50",
                  "n_test_labels", "seed", "config_hash")
PREDICTION_COLUMNS = ("cultivar", "season", "date", "pred_lte10", "pred_lte50",
                      "pred_lte90", "label_lte50")


class InsufficientDataError(DataError):
    pass


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    batch: int = 12
    epochs: int = 400
    seed: int = 0
    precision: str = "float64"
    fc_dims: tuple = PAPER_FC
    gru_hidden: int = PAPER_GRU
    concat_embed_dim: int | None = None
    features: tuple = DEFAULT_FEATURES
    finetune_epochs: int | None = None  # defaults to epochs
    finetune_full: bool = False
    normalize_labels: bool = False

    def __post_init__(self):
        object.__setattr__(self, "fc_dims", tuple(int(d) for d in self.fc_dims))
        object.__setattr__(self, "features", tuple(self.features))
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.precision not in ("float64", "float32"):
            raise ValueError("precision must be float64 or float32")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")

    @classmethod
    def desk(cls, **kw) -> "TrainConfig":
        base = dict(fc_dims=DESK_FC, gru_hidden=DESK_GRU, epochs=200)
        base.update(kw)
        return cls(**base)

    @property
    def dtype(self):
        return np.dtype(self.precision)

    @property
    def ft_epochs(self) -> int:
        return self.epochs if self.finetune_epochs is None else self.finetune_epochs

    def model_spec(self, variant: str, n_tasks: int = 1) -> ModelSpec:
        embed = self.concat_embed_dim if variant == "ConcatE" else None
        return ModelSpec(variant=variant, input_dim=len(self.features), fc_dims=self.fc_dims,
                         gru_hidden=self.gru_hidden, n_tasks=n_tasks, embed_dim=embed)


@dataclass(frozen=True)
class ExperimentConfig:
    n_trials: int = 3
    n_test: int = 2
    split_seed: int = 0
    grid: dict | None = None  # Ferguson grid; None = ferguson.DEFAULT_GRID
    sizes: tuple = DEFAULT_SIZES
    size_targets: tuple = ()  # cultivar names; empty = most seasons
    transfer_cultivars: tuple = ()  # cultivar names; empty = all
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(str(s).lower() for s in self.sizes))
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        for s in self.sizes:
            if s != "all" and not (s.isdigit() and int(s) >= 1):
                raise ValueError(f"bad dataset size {s!r}")


def config_hash(*parts) -> str:
    """Short stable hash of JSON-serialisable configuration objects."""
    def plain(o):
        if dataclasses.is_dataclass(o):
            return {k: plain(v) for k, v in dataclasses.asdict(o).items()}
        if isinstance(o, dict):
            return {str(k): plain(v) for k, v in sorted(o.items())}
        if isinstance(o, (list, tuple)):
            return [plain(v) for v in o]
        return o
    text = json.dumps([plain(p) for p in parts], sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


# -- batching ----------------------------------------------------------------

@dataclass(frozen=True)
class LabelStats:
    """One affine map shared by LTE10/50/90 so their ordering is preserved."""
    mean: float
    sd: float

    def apply(self, y):
        return (y - self.mean) / self.sd

    def invert(self, z):
        return z * self.sd + self.mean


def fit_label_stats(seasons: Sequence[Season]) -> LabelStats:
    vals = np.concatenate([s.labels[s.mask] for s in seasons]) if seasons else np.empty(0)
    if vals.size == 0:
        raise DataError("no labels in training seasons")
    sd = float(vals.std())
    return LabelStats(float(vals.mean()), sd if sd > 0 else 1.0)


def stack_seasons(seasons: Sequence[Season], fstats: FeatureStats, lstats: LabelStats,
                  dtype=np.float64):
    """Pad seasons to a common length: (x, target, mask) with masked-out padding."""
    T = max(s.length for s in seasons)
    n, D = len(seasons), len(fstats.names)
    x = np.zeros((n, T, D), dtype=dtype)
    y = np.zeros((n, T, 3), dtype=dtype)
    m = np.zeros((n, T, 3), dtype=bool)
    for i, s in enumerate(seasons):
        L = s.length
        x[i, :L] = fstats.apply(s.feature_matrix(fstats.names))
        m[i, :L] = s.mask
        y[i, :L] = np.where(s.mask, lstats.apply(np.nan_to_num(s.labels)), 0.0)
    return x, y, m


@dataclass
class TrainedModel:
    model: Model
    features: FeatureStats
    labels: LabelStats
    losses: list
    task_ids: dict  # cultivar id -> task id

    def predict(self, seasons: Sequence[Season], task_ids: Sequence[int] | None = None):
        """Per-season (T, 3) predictions in degrees C."""
        if not seasons:
            return []
        if task_ids is None:
            task_ids = [self.task_ids.get(s.cultivar_id, 0) for s in seasons]
        x, _, _ = stack_seasons(seasons, self.features, self.labels, self.model.dtype)
        z = self.model.forward(x, np.asarray(task_ids, dtype=np.int64))
        out = self.labels.invert(np.asarray(z, dtype=np.float64))
        return [out[i, :s.length] for i, s in enumerate(seasons)]


def train(config: TrainConfig, spec: ModelSpec, seasons: Sequence[Season],
          task_ids: Sequence[int], fstats: FeatureStats | None = None) -> TrainedModel:
    """Adam on shuffled batches of whole seasons; returns the model and per-epoch mean loss."""
    if not seasons:
        raise DataError("no training seasons")
    fstats = fstats or fit_normalizer(seasons, config.features)
    lstats = fit_label_stats(seasons) if config.normalize_labels else LabelStats(0.0, 1.0)
    model = Model.create(spec, seed=config.seed, dtype=config.dtype)
    x, y, m = stack_seasons(seasons, fstats, lstats, config.dtype)
    tasks = np.asarray(task_ids, dtype=np.int64)
    n = len(seasons)
    state = AdamState(lr=config.lr)
    rng = np.random.default_rng([config.seed, 11])
    curve = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total, count = 0.0, 0
        for b, start in enumerate(range(0, n, config.batch)):
            idx = np.sort(order[start:start + config.batch])
            loss, grads = model.loss_and_grads(x[idx], y[idx], m[idx], tasks[idx])
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}")
            adam_step(model.params, grads, state)
            total += loss
            count += 1
        curve.append(total / count)
    cid_to_task = {}
    for s, t in zip(seasons, tasks):
        cid_to_task.setdefault(s.cultivar_id, int(t))
    return TrainedModel(model, fstats, lstats, curve, cid_to_task)


# -- metrics -----------------------------------------------------------------

def rmse_lte50(preds: Sequence[np.ndarray], seasons: Sequence[Season]) -> tuple[float, int]:
    """Pooled RMSE over labelled LTE50 days. ``preds`` are (T,) or (T, 3) per season."""
    sq, n = 0.0, 0
    for p, s in zip(preds, seasons):
        p = np.asarray(p)
        p50 = p[:, 1] if p.ndim == 2 else p
        keep = s.mask[:, 1]
        d = p50[keep] - s.labels[keep, 1]
        sq += float(np.dot(d, d))
        n += int(keep.sum())
    if n == 0:
        raise DataError("no labelled LTE50 entries in the evaluation seasons")
    return math.sqrt(sq / n), n


def evaluate(trained: TrainedModel, seasons: Sequence[Season],
             task_ids: Sequence[int] | None = None) -> tuple[float, int]:
    return rmse_lte50(trained.predict(seasons, task_ids), seasons)


# -- results -----------------------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    experiment: str
    trial: int
    cultivar: str
    model: str
    rmse_lte50: float
    n_test_labels: int
    seed: int
    config_hash: str


@dataclass
class Table:
    row_label: str
    columns: tuple
    rows: list  # (label, [value or None per column])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow((self.row_label,) + tuple(self.columns))
        for label, vals in self.rows:
            w.writerow([label] + ["" if v is None else repr(float(v)) for v in vals])
        return buf.getvalue()


@dataclass
class ExperimentResult:
    experiment: str
    rows: list
    table: Table
    predictions: dict = field(default_factory=dict)  # (trial, model) -> list of dump rows

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow([r.experiment, r.trial, r.cultivar, r.model, repr(r.rmse_lte50),
                        r.n_test_labels, r.seed, r.config_hash])
        return buf.getvalue()

    def predictions_csv(self, key) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PREDICTION_COLUMNS)
        w.writerows(self.predictions[key])
        return buf.getvalue()

    def mean_rmse(self, model: str, cultivar: str) -> float | None:
        vals = [r.rmse_lte50 for r in self.rows if r.model == model and r.cultivar == cultivar]
        return float(np.mean(vals)) if vals else None


def _fmt(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def dump_rows(name: str, seasons: Sequence[Season], preds) -> list:
    out = []
    for s, p in zip(seasons, preds):
        p = np.asarray(p)
        for t, d in enumerate(s.dates):
            if p.ndim == 2:
                p10, p50, p90 = p[t]
            else:
                p10, p50, p90 = None, p[t], None
            lab = s.labels[t, 1]
            out.append([name, s.start_year, d.isoformat(), _fmt(p10), _fmt(p50), _fmt(p90),
                        "" if math.isnan(lab) else repr(float(lab))])
    return out


def recompute_rmse(dump_csv: str, cultivar: str | None = None) -> float:
    """RMSE on LTE50 recomputed from a per-day prediction dump."""
    sq, n = 0.0, 0
    for row in csv.DictReader(io.StringIO(dump_csv)):
        if cultivar is not None and row["cultivar"] != cultivar:
            continue
        if row["label_lte50"] == "":
            continue
        d = float(row["pred_lte50"]) - float(row["label_lte50"])
        sq += d * d
        n += 1
    if n == 0:
        raise DataError("dump has no labelled rows")
    return math.sqrt(sq / n)


# -- experiment runner -------------------------------------------------------

class Runner:
    """Holds a corpus, its trial splits and a cache of trained models.

    The cache key is the full training condition (variant, task layout,
    training seasons, seed), so suites that share a condition, e.g. the
    "all" columns, reuse the very same model rather than retraining.
    """

    def __init__(self, corpus: Corpus, train_config: TrainConfig,
                 exp_config: ExperimentConfig | None = None):
        if len(corpus) < 1:
            raise DataError("empty corpus")
        self.corpus = corpus
        self.train_config = train_config
        self.exp = exp_config or ExperimentConfig()
        self.splits: list[TrialSplit] = make_trial_splits(
            corpus, self.exp.n_trials, self.exp.split_seed, self.exp.n_test)
        self.hash = config_hash(train_config, dataclasses.replace(self.exp, jobs=1))
        self._cache: dict = {}
        self._fstats: dict = {}
        self._lock = threading.Lock()

    # per-trial helpers
    def trial_seed(self, trial: int) -> int:
        return self.train_config.seed + trial

    def train_seasons(self, trial: int, cid: int) -> list[Season]:
        c = self.corpus[cid]
        return [c.seasons[i] for i in self.splits[trial].train[cid]]

    def test_seasons(self, trial: int, cid: int) -> list[Season]:
        c = self.corpus[cid]
        return [c.seasons[i] for i in self.splits[trial].test[cid]]

    def feature_stats(self, trial: int) -> FeatureStats:
        # Weather statistics over every training season of the trial, shared
        # by all models so that they see identical inputs.
        with self._lock:
            if trial not in self._fstats:
                seasons = [s for cid in range(len(self.corpus))
                           for s in self.train_seasons(trial, cid)]
                self._fstats[trial] = fit_normalizer(seasons, self.train_config.features)
            return self._fstats[trial]

    def fit(self, trial: int, variant: str, members: Sequence[int],
            overrides: dict | None = None) -> TrainedModel:
        """Train ``variant`` on cultivars ``members`` (task id = position).

        ``overrides`` maps a cultivar id to the season list to use instead of
        its full training split.
        """
        overrides = overrides or {}
        seasons, tasks = [], []
        for t, cid in enumerate(members):
            ss = overrides.get(cid, self.train_seasons(trial, cid))
            seasons.extend(ss)
            tasks.extend([t] * len(ss))
        n_tasks = len(members) if variant != "STL" else 1
        if variant == "STL" and len(members) != 1:
            raise ValueError("STL trains on exactly one cultivar")
        seed = self.trial_seed(trial)
        key = (trial, variant, tuple(members),
               tuple((s.cultivar_id, s.start_year) for s in seasons), seed)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        cfg = dataclasses.replace(self.train_config, seed=seed)
        spec = cfg.model_spec(variant, n_tasks)
        log.info("trial %d: training %s on %d seasons", trial, variant, len(seasons))
        trained = train(cfg, spec, seasons, tasks, self.feature_stats(trial))
        with self._lock:
            self._cache.setdefault(key, trained)
            return self._cache[key]

    def _row(self, experiment, trial, cid, model, rmse, n) -> ResultRow:
        return ResultRow(experiment, trial, self.corpus[cid].name, model, rmse, n,
                         self.trial_seed(trial), self.hash)

    def _map_trials(self, fn) -> list:
        trials = range(self.exp.n_trials)
        if self.exp.jobs <= 1:
            return [fn(k) for k in trials]
        with ThreadPoolExecutor(max_workers=self.exp.jobs) as pool:
            return list(pool.map(fn, trials))

    def _score(self, experiment, trial, cid, model_name, trained, preds_store,
               task_id=None):
        seasons = self.test_seasons(trial, cid)
        tids = None if task_id is None else [task_id] * len(seasons)
        preds = trained.predict(seasons, tids)
        rmse, n = rmse_lte50(preds, seasons)
        preds_store.setdefault((trial, model_name), []).extend(
            dump_rows(self.corpus[cid].name, seasons, preds))
        return self._row(experiment, trial, cid, model_name, rmse, n)

    # -- Table 2 --------------------------------------------------------------

    def main_comparison(self) -> ExperimentResult:
        if len(self.corpus) < 2:
            raise DataError("the main comparison needs at least 2 cultivars")
        everyone = list(range(len(self.corpus)))

        def one_trial(k):
            rows, preds = [], {}
            for v in MTL_VARIANTS:
                tm = self.fit(k, v, everyone)
                for cid in everyone:
                    rows.append(self._score("compare", k, cid, v, tm, preds))
            for cid in everyone:
                tm = self.fit(k, "STL", [cid])
                rows.append(self._score("compare", k, cid, "Single", tm, preds))
            for cid in everyone:
                res = ferguson.grid_search(self.train_seasons(k, cid), self.exp.grid,
                                           jobs=self.exp.jobs)
                test = self.test_seasons(k, cid)
                fp = [ferguson.ferguson_predict(s, res.params) for s in test]
                rmse, n = rmse_lte50(fp, test)
                preds.setdefault((k, "Ferguson"), []).extend(
                    dump_rows(self.corpus[cid].name, test, fp))
                rows.append(self._row("compare", k, cid, "Ferguson", rmse, n))
            return rows, preds

        rows, preds = self._merge(self._map_trials(one_trial))
        res = ExperimentResult("compare", rows, None, preds)
        table_rows = [(name, [res.mean_rmse(col, name) for col in COMPARE_COLUMNS])
                      for name in self.corpus.names]
        res.table = Table("cultivar", COMPARE_COLUMNS, table_rows)
        return res

    @staticmethod
    def _merge(parts):
        rows, preds = [], {}
        for r, p in parts:
            rows.extend(r)
            preds.update(p)
        return rows, preds

    # -- Table 3 --------------------------------------------------------------

    def size_targets(self) -> list[int]:
        if self.exp.size_targets:
            return [self.corpus.index(n) for n in self.exp.size_targets]
        counts = [len(c.seasons) for c in self.corpus.cultivars]
        return [int(np.argmax(counts))]

    def nested_subsets(self, trial: int, cid: int) -> dict[str, list[Season]]:
        """Training subsets per size; each smaller set is contained in every larger one."""
        full = self.train_seasons(trial, cid)
        n = len(full)
        numeric = [int(s) for s in self.exp.sizes if s != "all"]
        if numeric and max(numeric) > n:
            raise InsufficientDataError(
                f"cultivar {self.corpus[cid].name!r} has {n} training seasons in trial "
                f"{trial}; size {max(numeric)} requested")
        rng = np.random.default_rng([self.exp.split_seed, 23, trial, cid])
        order = [int(i) for i in rng.permutation(n)]
        out = {}
        for s in self.exp.sizes:
            if s == "all":
                out[s] = list(full)
            else:
                out[s] = [full[i] for i in sorted(order[:int(s)])]
        return out

    def dataset_size_ablation(self) -> ExperimentResult:
        targets = self.size_targets()
        everyone = list(range(len(self.corpus)))
        for cid in targets:
            # checked up front so the error comes before any training
            for k in range(self.exp.n_trials):
                self.nested_subsets(k, cid)

        def one_trial(k):
            rows, preds = [], {}
            for cid in targets:
                for size, subset in self.nested_subsets(k, cid).items():
                    label = size_label(size)
                    mtl = self.fit(k, "MultiH", everyone, {cid: subset})
                    rows.append(self._score("ablate-size", k, cid, f"MTL@{label}", mtl, preds))
                    stl = self.fit(k, "STL", [cid], {cid: subset})
                    rows.append(self._score("ablate-size", k, cid, f"STL@{label}", stl, preds))
            return rows, preds

        rows, preds = self._merge(self._map_trials(one_trial))
        res = ExperimentResult("ablate-size", rows, None, preds)
        cols = tuple(size_label(s) for s in self.exp.sizes)
        table_rows = []
        for cid in targets:
            name = self.corpus[cid].name
            for kind in ("MTL", "STL"):
                table_rows.append((f"{name} ({kind})",
                                   [res.mean_rmse(f"{kind}@{c}", name) for c in cols]))
        res.table = Table("cultivar", cols, table_rows)
        return res

    # -- Table 4 --------------------------------------------------------------

    def task_subsets(self) -> dict[str, list[int]]:
        """High/low/mix/all cultivar subsets ranked by season count."""
        C = len(self.corpus)
        k = 10 if C >= 20 else math.ceil(C / 2)
        if k > C:
            raise DataError(f"subset size {k} exceeds {C} cultivars")
        ranked = season_rank(self.corpus)
        return {
            "High": sorted(ranked[:k]),
            "Low": sorted(ranked[C - k:]),
            "Mix": sorted(ranked[:math.ceil(k / 2)] + ranked[C - k // 2:]),
            "All": list(range(C)),
        }

    def task_subset_ablation(self) -> ExperimentResult:
        subsets = self.task_subsets()

        def one_trial(k):
            rows, preds = [], {}
            for label, members in subsets.items():
                tm = self.fit(k, "MultiH", members)
                for t, cid in enumerate(members):
                    rows.append(self._score("ablate-tasks", k, cid, f"MultiH[{label}]", tm,
                                            preds, task_id=t))
            for cid in range(len(self.corpus)):
                tm = self.fit(k, "STL", [cid])
                rows.append(self._score("ablate-tasks", k, cid, "Single", tm, preds))
            return rows, preds

        rows, preds = self._merge(self._map_trials(one_trial))
        res = ExperimentResult("ablate-tasks", rows, None, preds)
        table_rows = []
        for cid in season_rank(self.corpus):
            name = self.corpus[cid].name
            vals = [res.mean_rmse(f"MultiH[{label}]", name) if cid in subsets[label] else None
                    for label in SUBSET_COLUMNS[:-1]]
            vals.append(res.mean_rmse("Single", name))
            table_rows.append((name, vals))
        res.table = Table("cultivar", SUBSET_COLUMNS, table_rows)
        return res

    # -- Table 5 --------------------------------------------------------------

    def transfer_experiment(self) -> ExperimentResult:
        C = len(self.corpus)
        if C < 3:
            raise DataError("transfer needs at least 3 cultivars")
        names = self.exp.transfer_cultivars or tuple(self.corpus.names)
        held = [self.corpus.index(n) for n in names]
        everyone = list(range(C))
        cfg = self.train_config

        def one_trial(k):
            rows, preds = [], {}
            for cid in held:
                others = [i for i in everyone if i != cid]
                ft_seasons = self.train_seasons(k, cid)
                test = self.test_seasons(k, cid)
                for v in TRANSFER_COLUMNS:
                    variant = v.split()[0]
                    mtl = self.fit(k, variant, everyone)
                    mtl_rmse, _ = rmse_lte50(mtl.predict(test), test)
                    base = self.fit(k, variant, others)
                    x, y, m = stack_seasons(ft_seasons, base.features, base.labels,
                                            base.model.dtype)
                    model, losses = finetune(
                        base.model, x, y, m, epochs=cfg.ft_epochs, lr=cfg.lr,
                        batch=cfg.batch, seed=self.trial_seed(k), full=cfg.finetune_full)
                    new_task = len(others)
                    ft = TrainedModel(model, base.features, base.labels, losses,
                                      {cid: new_task})
                    ft_preds = ft.predict(test, [new_task] * len(test))
                    ft_rmse, n = rmse_lte50(ft_preds, test)
                    preds.setdefault((k, v), []).extend(
                        dump_rows(self.corpus[cid].name, test, ft_preds))
                    rows.append(self._row("transfer", k, cid, v, ft_rmse, n))
                    rows.append(self._row("transfer", k, cid, f"{v} delta",
                                          mtl_rmse - ft_rmse, n))
            return rows, preds

        rows, preds = self._merge(self._map_trials(one_trial))
        res = ExperimentResult("transfer", rows, None, preds)
        table_rows = [(self.corpus[cid].name,
                       [res.mean_rmse(f"{v} delta", self.corpus[cid].name)
                        for v in TRANSFER_COLUMNS]) for cid in held]
        body = np.array([r[1] for r in table_rows], dtype=np.float64)
        table_rows.append(("Median", list(np.median(body, axis=0))))
        table_rows.append(("Mean", list(body.mean(axis=0))))
        res.table = Table("cultivar", TRANSFER_COLUMNS, table_rows)
        return res


def size_label(size: str) -> str:
    return "All" if size == "all" else str(size)


def season_rank(corpus: Corpus) -> list[int]:
    """Cultivar ids by descending season count, ties by id."""
    return sorted(range(len(corpus)), key=lambda i: (-len(corpus[i].seasons), i))


def run_main_comparison(corpus, train_config, exp_config=None) -> ExperimentResult:
    return Runner(corpus, train_config, exp_config).main_comparison()


def run_dataset_size_ablation(corpus, train_config, exp_config=None) -> ExperimentResult:
    return Runner(corpus, train_config, exp_config).dataset_size_ablation()


def run_task_subset_ablation(corpus, train_config, exp_config=None) -> ExperimentResult:
    return Runner(corpus, train_config, exp_config).task_subset_ablation()


def run_transfer_experiment(corpus, train_config, exp_config=None) -> ExperimentResult:
    return Runner(corpus, train_config, exp_config).transfer_experiment()
