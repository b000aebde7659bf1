"""Run configuration: an INI document with sections data, model, train,
ferguson_grid and experiment.

Every key is optional and defaults to the full-size (scale = paper) setting. Unknown
sections or keys are rejected. The resolved document is written back with
every key present, and its hash identifies the run.
"""
from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass

from .dataio import DEFAULT_FEATURES, WEATHER_COLUMNS
from .ferguson import DEFAULT_GRID, PARAM_ORDER, FergusonParams
from .harness import DEFAULT_SIZES, ExperimentConfig, TrainConfig
from .models import DESK_FC, DESK_GRU, PAPER_FC, PAPER_GRU, VARIANTS
from .synthgen import SynthSpec


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(item):
    def parse(text: str):
        return tuple(item(v.strip()) for v in text.strip().strip("[]").split(",") if v.strip())
    return parse


def _opt_int(text: str):
    return None if text.strip().lower() in ("", "none") else int(text)


def _show(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_show(v) for v in value)
    return str(value)


# section -> key -> (parser, default). ``None`` defaults are resolved later
# because they depend on other keys (model scale).
SCHEMA = {
    "data": {
        "features": (_list(str), DEFAULT_FEATURES),
        "filter": (_bool, True),
    },
    "model": {
        "scale": (str, "paper"),
        "variant": (str, "STL"),
        "fc_dims": (_list(int), None),
        "gru_hidden": (_opt_int, None),
        "concat_embed_dim": (_opt_int, None),
        "precision": (str, "float64"),
    },
    "train": {
        "lr": (float, 0.001),
        "batch": (int, 12),
        "epochs": (_opt_int, None),
        "seed": (int, 0),
        "finetune_epochs": (_opt_int, None),
        "finetune_full": (_bool, False),
        "normalize_labels": (_bool, False),
    },
    "ferguson_grid": {
        name: (_list(float), tuple(DEFAULT_GRID.get(name, ()))) for name in PARAM_ORDER
    },
    "experiment": {
        "n_trials": (int, 3),
        "n_test": (int, 2),
        "split_seed": (int, 0),
        "sizes": (_list(str), DEFAULT_SIZES),
        "size_targets": (_list(str), ()),
        "transfer_cultivars": (_list(str), ()),
    },
}


@dataclass
class RunConfig:
    values: dict  # section -> key -> parsed value

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls.from_text("")

    @classmethod
    def from_text(cls, text: str, overrides: dict | None = None) -> "RunConfig":
        """Parse ``text`` and apply ``overrides`` (section -> key -> raw value or parsed)."""
        parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        values = {}
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
        for section, keys in SCHEMA.items():
            values[section] = {}
            given = parser[section] if parser.has_section(section) else {}
            for key in given:
                if key not in keys:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
            for key, (parse, default) in keys.items():
                if key in given:
                    try:
                        values[section][key] = parse(given[key])
                    except ValueError as exc:
                        raise ConfigError(f"[{section}] {key}: {exc}") from None
                else:
                    values[section][key] = default
        for section, kv in (overrides or {}).items():
            for key, val in kv.items():
                if val is None:
                    continue
                if section not in SCHEMA or key not in SCHEMA[section]:
                    raise ConfigError(f"unknown override {section}.{key}")
                values[section][key] = SCHEMA[section][key][0](val) if isinstance(val, str) else val
        cfg = cls(values)
        cfg._resolve()
        return cfg

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "RunConfig":
        with open(path) as fh:
            return cls.from_text(fh.read(), overrides)

    def _resolve(self):
        m, t = self.values["model"], self.values["train"]
        desk = m["scale"] == "desk"
        if m["scale"] not in ("desk", "paper"):
            raise ConfigError("[model] scale must be desk or paper")
        if m["variant"] not in VARIANTS:
            raise ConfigError(f"[model] variant must be one of {VARIANTS}")
        if m["fc_dims"] is None:
            m["fc_dims"] = DESK_FC if desk else PAPER_FC
        if m["gru_hidden"] is None:
            m["gru_hidden"] = DESK_GRU if desk else PAPER_GRU
        if t["epochs"] is None:
            t["epochs"] = 200 if desk else 400
        bad = [f for f in self.values["data"]["features"] if f not in WEATHER_COLUMNS]
        if bad:
            raise ConfigError(f"[data] unknown features {bad}")
        try:
            self.train_config()
            self.experiment_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def to_text(self) -> str:
        buf = io.StringIO()
        for section, keys in SCHEMA.items():
            buf.write(f"[{section}]\n")
            for key in keys:
                buf.write(f"{key} = {_show(self.values[section][key])}\n")
            buf.write("\n")
        return buf.getvalue()

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:12]

    def train_config(self) -> TrainConfig:
        m, t = self.values["model"], self.values["train"]
        return TrainConfig(
            lr=t["lr"], batch=t["batch"], epochs=t["epochs"], seed=t["seed"],
            precision=m["precision"], fc_dims=m["fc_dims"], gru_hidden=m["gru_hidden"],
            concat_embed_dim=m["concat_embed_dim"], features=self.values["data"]["features"],
            finetune_epochs=t["finetune_epochs"], finetune_full=t["finetune_full"],
            normalize_labels=t["normalize_labels"],
        )

    def grid(self) -> dict:
        return {k: list(v) for k, v in self.values["ferguson_grid"].items() if v}

    def experiment_config(self, jobs: int = 1) -> ExperimentConfig:
        e = self.values["experiment"]
        return ExperimentConfig(
            n_trials=e["n_trials"], n_test=e["n_test"], split_seed=e["split_seed"],
            grid=self.grid(), sizes=e["sizes"], size_targets=e["size_targets"],
            transfer_cultivars=e["transfer_cultivars"], jobs=jobs,
        )


# -- synthetic corpus spec ---------------------------------------------------

_SYNTH_KEYS = {
    "n_cultivars": int, "seasons_per_cultivar": _list(int), "perturbation": float,
    "label_period": int, "noise_sd": float, "seed": int,
    "feature_missing_rate": float, "first_year": int,
}


def load_synth_spec(text: str) -> SynthSpec:
    """``[synth]`` keys of :class:`SynthSpec` plus an optional ``[base_params]`` section.

    ``seasons_per_cultivar`` may be a single number applied to every cultivar.
    """
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed synth spec: {exc}") from None
    for section in parser.sections():
        if section not in ("synth", "base_params"):
            raise ConfigError(f"unknown synth spec section [{section}]")
    kw = {}
    if parser.has_section("synth"):
        for key, raw in parser["synth"].items():
            if key not in _SYNTH_KEYS:
                raise ConfigError(f"unknown key {key!r} in [synth]")
            try:
                kw[key] = _SYNTH_KEYS[key](raw)
            except ValueError as exc:
                raise ConfigError(f"[synth] {key}: {exc}") from None
    if parser.has_section("base_params"):
        base = {}
        for key, raw in parser["base_params"].items():
            if key not in PARAM_ORDER:
                raise ConfigError(f"unknown key {key!r} in [base_params]")
            base[key] = float(raw)
        kw["base_params"] = FergusonParams(**base)
    n = kw.get("n_cultivars", SynthSpec.n_cultivars)
    spc = kw.get("seasons_per_cultivar")
    if spc is None:
        kw["seasons_per_cultivar"] = (8,) * n
    elif len(spc) == 1:
        kw["seasons_per_cultivar"] = spc * n
    spec = SynthSpec(**kw)
    problems = spec.problems()
    if problems:
        raise ConfigError("invalid synth spec: " + "; ".join(problems))
    return spec
