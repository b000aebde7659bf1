"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure (non-finite values, failed gradient check).
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import ferguson, harness, kernels
from .config import ConfigError, RunConfig, load_synth_spec
from .dataio import DataError, FeatureStats, load_corpus, serialize_records
from .models import VARIANTS, Model, ModelSpec, check_gradients
from .ndiff import NumericError
from .synthgen import SynthSpec, generate_corpus, truths_to_dict

log = logging.getLogger("coldhardy")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3
GRADCHECK_TOL = 1e-4
BASELINE_NOTE = ("# Ferguson: thermal-time reconstruction of the Ferguson model, "
                 "not the published equations\n")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- shared helpers ------------------------------------------------------------

def _data_paths(items) -> list[str]:
    paths = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            found = sorted(str(f) for f in p.glob("*.csv"))
            if not found:
                raise DataError(f"no CSV files in {p}")
            paths.extend(found)
        elif p.exists():
            paths.append(str(p))
        else:
            raise DataError(f"no such data file: {p}")
    return paths


def _resolve_config(args) -> RunConfig:
    overrides = {
        "model": {"scale": "desk" if getattr(args, "desk", False) else None,
                  "variant": getattr(args, "variant", None),
                  "precision": getattr(args, "precision", None)},
        "train": {"seed": getattr(args, "seed", None), "epochs": getattr(args, "epochs", None)},
        "experiment": {"n_trials": getattr(args, "trials", None)},
    }
    if args.config:
        return RunConfig.from_file(args.config, overrides)
    return RunConfig.from_text("", overrides)


def _run_dir(args, cfg: RunConfig) -> Path:
    stamp = dt.datetime.now().strftime("%Y%m%d-%H%M%S-%f")
    run = Path(args.out) / f"{stamp}-{cfg.hash}"
    run.mkdir(parents=True, exist_ok=False)
    (run / "config.ini").write_text(cfg.to_text())
    print(f"run directory: {run}")
    return run


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _pick_cultivar(corpus, ident: str) -> int:
    if ident in corpus.names:
        return corpus.index(ident)
    try:
        i = int(ident)
    except ValueError:
        raise DataError(f"unknown cultivar {ident!r}") from None
    if not 0 <= i < len(corpus):
        raise DataError(f"cultivar index {i} out of range [0, {len(corpus)})")
    return i


# -- subcommands ---------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.spec:
        spec = load_synth_spec(Path(args.spec).read_text())
    else:
        spec = SynthSpec()
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    sc = generate_corpus(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = list(sc.rows())
    for name in sc.corpus.names:
        _write(out / f"{name}.csv", serialize_records(r for r in rows if r[0] == name))
    _write(out / "truth.json", json.dumps(truths_to_dict(sc), indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(sc.corpus)} cultivars to {out}")
    return 0


def cmd_ingest(args) -> int:
    cfg = _resolve_config(args)
    corpus = load_corpus(_data_paths(args.data), filter=cfg["data"]["filter"])
    run = _run_dir(args, cfg)
    lines = ["cultivar,season,length,label_ratio,temperature_ratio,status"]
    for c in corpus.cultivars:
        for s in c.seasons:
            lines.append(f"{c.name},{s.start_year},{s.length},{s.label_ratio()!r},"
                         f"{s.temperature_ratio()!r},kept")
    for r in corpus.rejections:
        lines.append(f"{corpus[r.cultivar_id].name},{r.start_year},,{r.label_ratio!r},"
                     f"{r.temperature_ratio!r},rejected")
    _write(run / "seasons.csv", "\n".join(lines) + "\n")
    for c in corpus.cultivars:
        print(f"{c.name}: {len(c.seasons)} seasons")
    print(f"{len(corpus.rejections)} seasons rejected")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    corpus = load_corpus(_data_paths(args.data), filter=cfg["data"]["filter"])
    tc = cfg.train_config()
    variant = cfg["model"]["variant"]
    if variant == "STL":
        if args.cultivar is None:
            raise UsageError("STL training needs --cultivar")
        members = [_pick_cultivar(corpus, args.cultivar)]
    else:
        members = list(range(len(corpus)))
    seasons, tasks = [], []
    for t, cid in enumerate(members):
        seasons.extend(corpus[cid].seasons)
        tasks.extend([t] * len(corpus[cid].seasons))
    spec = tc.model_spec(variant, len(members) if variant != "STL" else 1)
    run = _run_dir(args, cfg)
    trained = harness.train(tc, spec, seasons, tasks)
    meta = {
        "features": list(trained.features.names),
        "feature_mean": trained.features.mean.tolist(),
        "feature_sd": trained.features.sd.tolist(),
        "label_mean": trained.labels.mean, "label_sd": trained.labels.sd,
        "tasks": [corpus[c].name for c in members],
        "config_hash": cfg.hash,
    }
    trained.model.save(run / "model.ckpt", meta)
    _write(run / "loss.csv", "epoch,loss\n" + "".join(
        f"{i},{v!r}\n" for i, v in enumerate(trained.losses)))
    final = trained.losses[-1] if trained.losses else float("nan")
    print(f"trained {variant} on {len(seasons)} seasons, final loss {final:.6g}")
    return 0


def _load_trained(path) -> tuple[harness.TrainedModel, list]:
    model, meta = Model.load(path)
    fs = FeatureStats(tuple(meta["features"]), np.array(meta["feature_mean"]),
                      np.array(meta["feature_sd"]))
    ls = harness.LabelStats(meta["label_mean"], meta["label_sd"])
    return harness.TrainedModel(model, fs, ls, [], {}), meta["tasks"]


def cmd_predict(args) -> int:
    trained, tasks = _load_trained(args.checkpoint)
    if args.cultivar in tasks:
        task = tasks.index(args.cultivar)
    else:
        try:
            task = int(args.cultivar)
        except ValueError:
            raise DataError(f"cultivar {args.cultivar!r} is not a task of this model") from None
        if not 0 <= task < trained.model.n_addressable_tasks:
            raise DataError(f"task {task} out of range for this model")
    corpus = load_corpus(_data_paths([args.weather]), filter=False)
    seasons = [s for c in corpus.cultivars for s in c.seasons]
    if not seasons:
        raise DataError("no season windows in the weather file")
    preds = trained.predict(seasons, [task] * len(seasons))
    name = tasks[task] if task < len(tasks) else str(task)
    res = harness.ExperimentResult("predict", [], None,
                                   {(0, name): harness.dump_rows(name, seasons, preds)})
    out = Path(args.out)
    _write(out, res.predictions_csv((0, name)))
    print(f"wrote {sum(s.length for s in seasons)} daily predictions to {out}")
    return 0


def cmd_tune(args) -> int:
    cfg = _resolve_config(args)
    corpus = load_corpus(_data_paths(args.data), filter=cfg["data"]["filter"])
    cid = _pick_cultivar(corpus, args.cultivar)
    run = _run_dir(args, cfg)
    res = ferguson.grid_search(corpus[cid].seasons, cfg.grid(), jobs=args.jobs)
    _write(run / "ferguson.txt", BASELINE_NOTE + res.params.to_text(res.rmse))
    print(res.params.to_text(res.rmse), end="")
    return 0


def _experiment(method: str):
    def run_cmd(args) -> int:
        cfg = _resolve_config(args)
        corpus = load_corpus(_data_paths(args.data), filter=cfg["data"]["filter"])
        run = _run_dir(args, cfg)
        runner = harness.Runner(corpus, cfg.train_config(), cfg.experiment_config(args.jobs))
        runner.hash = cfg.hash
        res = getattr(runner, method)()
        write_experiment(run, res)
        print(res.table.to_csv(), end="")
        return 0
    return run_cmd


def write_experiment(run: Path, res: harness.ExperimentResult) -> None:
    _write(run / "report.csv", res.rows_csv())
    _write(run / "table.csv", res.table.to_csv())
    if "Ferguson" in res.table.columns:
        _write(run / "notes.txt", BASELINE_NOTE)
    for trial, model in sorted(res.predictions):
        safe = model.replace(" ", "_").replace("@", "_at_").replace("[", "_").replace("]", "")
        _write(run / "predictions" / f"trial{trial}_{safe}.csv",
               res.predictions_csv((trial, model)))


def gradcheck_inputs(seed: int, days: int = 20, batch: int = 3):
    """A short normalised synthetic sequence with sparse labels."""
    sc = generate_corpus(SynthSpec(n_cultivars=1, seasons_per_cultivar=(1,), seed=seed,
                                   label_period=3))
    s = sc.corpus[0].seasons[0]
    feats = s.feature_matrix()
    z = (feats - feats.mean(axis=0)) / feats.std(axis=0)
    rng = np.random.default_rng([seed, 31])
    starts = rng.integers(0, s.length - days, size=batch)
    x = np.stack([z[a:a + days] for a in starts])
    lab = np.stack([s.labels[a:a + days] for a in starts])
    mask = ~np.isnan(lab)
    target = np.where(mask, (np.nan_to_num(lab) + 10.0) / 5.0, 0.0)
    return x, target, mask


def run_gradcheck(seed: int = 0, eps: float = 1e-5, per_block: int = 12) -> dict:
    x, target, mask = gradcheck_inputs(seed)
    out = {}
    for v in VARIANTS:
        C = 1 if v == "STL" else 3
        model = Model.create(ModelSpec.desk(v, n_tasks=C), seed=seed)
        tasks = np.arange(x.shape[0]) % C
        out[v] = check_gradients(model, x, target, mask, tasks, eps=eps,
                                 per_block=per_block, seed=seed)
    return out


def cmd_gradcheck(args) -> int:
    reports = run_gradcheck(args.seed, args.eps, args.per_block)
    worst = 0.0
    for v, r in reports.items():
        print(f"{v:8s} {r}")
        worst = max(worst, r.max_rel_error)
    print(f"max relative error {worst:.3e} (tolerance {GRADCHECK_TOL:g})")
    return 0 if worst < GRADCHECK_TOL else EXIT_NUMERIC


# -- parser ------------------------------------------------------------------

def _common(p, data=True, out=True):
    p.add_argument("--config", help="run configuration file (INI)")
    if data:
        p.add_argument("--data", nargs="+", required=True,
                       help="corpus CSV files or directories of CSV files")
    if out:
        p.add_argument("--out", default="runs", help="root for run directories (default: runs)")
    p.add_argument("--seed", type=int, help="training seed (overrides config)")
    p.add_argument("--epochs", type=int, help="training epochs (overrides config)")
    p.add_argument("--desk", action="store_true", help="use desk-scale model dimensions")
    p.add_argument("--precision", choices=("float64", "float32"), help="floating point mode")
    p.add_argument("--jobs", type=int, default=1,
                   help="concurrent trials or grid chunks; results do not depend on it")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coldhardy",
                     description="Grape bud cold-hardiness models and experiment suites.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    parser.add_argument("--backend", choices=("cython", "python"),
                        help="kernel backend (default: compiled when available)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic corpus with hidden truths")
    p.add_argument("--spec", help="synthetic corpus spec (INI with [synth], [base_params])")
    p.add_argument("--out", required=True, help="output directory for CSVs and truth.json")
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="parse, filter and summarise corpus files")
    _common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train one model on every season")
    _common(p)
    p.add_argument("--variant", choices=VARIANTS, help="model variant (overrides config)")
    p.add_argument("--cultivar", help="cultivar name or index (STL only)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune-ferguson", help="grid-search Ferguson parameters for one cultivar")
    _common(p)
    p.add_argument("--cultivar", required=True, help="cultivar name or index")
    p.set_defaults(func=cmd_tune)

    for name, method, text in (
        ("compare", "main_comparison", "MTL variants vs single-task vs Ferguson"),
        ("ablate-size", "dataset_size_ablation", "vary the target cultivar's training seasons"),
        ("ablate-tasks", "task_subset_ablation", "MultiH trained on cultivar subsets"),
        ("transfer", "transfer_experiment", "finetuning vs multi-task training"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--trials", type=int, help="number of trials (overrides config)")
        p.set_defaults(func=_experiment(method))

    p = sub.add_parser("predict", help="per-day LTE predictions from a checkpoint")
    p.add_argument("--checkpoint", required=True, help="model.ckpt written by train")
    p.add_argument("--weather", required=True, help="weather CSV in the corpus schema")
    p.add_argument("--cultivar", required=True, help="task name or index in the checkpoint")
    p.add_argument("--out", default="predictions.csv", help="output CSV path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of every variant")
    p.add_argument("--seed", type=int, default=0, help="model and data seed")
    p.add_argument("--eps", type=float, default=1e-5, help="central difference step")
    p.add_argument("--per-block", type=int, default=12, help="coordinates per parameter block")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.backend:
        kernels.use(args.backend)
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, harness.InsufficientDataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
