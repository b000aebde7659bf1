import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from coldhardy.cli import build_parser, main

SUBCOMMANDS = ("synth", "ingest", "train", "predict", "tune-ferguson", "compare",
               "ablate-size", "ablate-tasks", "transfer", "gradcheck")

TINY_INI = """[model]
fc_dims = 8, 8, 8
gru_hidden = 8
[train]
epochs = 2
batch = 4
[ferguson_grid]
t_th = 4, 5
k_a_endo = 0.1
k_a_eco = 0.1
k_d_endo = 0.05
k_d_eco = 0.1
h_min = -25
h_max = -3
c_star = -300
theta = 1
[experiment]
n_trials = 1
"""


def only_run(root):
    runs = [p for p in root.iterdir() if p.is_dir()]
    assert len(runs) == 1
    return runs[0]


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        main([cmd, "--help"])
    assert exc.value.code == 0
    assert "usage" in capsys.readouterr().out


def test_usage_errors_exit_one(capsys):
    for argv in ([], ["frobnicate"], ["train"], ["gradcheck", "--eps", "abc"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 1


def test_every_subcommand_registered():
    text = build_parser().format_help()
    assert all(cmd in text for cmd in SUBCOMMANDS)


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    spec = out / "spec.ini"
    spec.write_text("[synth]\nn_cultivars = 3\nseasons_per_cultivar = 4, 3, 3\nseed = 5\n")
    assert main(["synth", "--spec", str(spec), "--out", str(out / "data")]) == 0
    return out / "data"


def test_synth_outputs(synth_dir):
    files = sorted(p.name for p in synth_dir.iterdir())
    assert "truth.json" in files and sum(f.endswith(".csv") for f in files) == 3
    truth = json.loads((synth_dir / "truth.json").read_text())
    assert sorted(truth) == ["synth_00", "synth_01", "synth_02"]
    assert set(truth["synth_00"]) >= {"t_th", "theta", "h_init"}


def test_missing_data_exits_two(tmp_path):
    assert main(["ingest", "--data", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("not,a,weather,file\n1,2,3,4\n")
    assert main(["ingest", "--data", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_bad_config_exits_one(tmp_path, synth_dir):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[train]\nwhatever = 1\n")
    assert main(["ingest", "--data", str(synth_dir), "--config", str(cfg),
                 "--out", str(tmp_path)]) == 1


def test_ingest(tmp_path, synth_dir):
    assert main(["ingest", "--data", str(synth_dir), "--out", str(tmp_path)]) == 0
    run = only_run(tmp_path)
    assert (run / "config.ini").exists()
    rows = list(csv.DictReader(open(run / "seasons.csv")))
    assert len(rows) == 10 and all(r["status"] == "kept" for r in rows)


def test_train_predict_round_trip(tmp_path, synth_dir):
    cfg = tmp_path / "tiny.ini"
    cfg.write_text(TINY_INI)
    out = tmp_path / "runs"
    assert main(["train", "--data", str(synth_dir), "--config", str(cfg), "--variant", "MultiH",
                 "--out", str(out)]) == 0
    run = only_run(out)
    losses = (run / "loss.csv").read_text().splitlines()
    assert losses[0] == "epoch,loss" and len(losses) == 3
    weather = sorted(synth_dir.glob("*.csv"))[1]
    pred_csv = tmp_path / "pred.csv"
    assert main(["predict", "--checkpoint", str(run / "model.ckpt"), "--weather", str(weather),
                 "--cultivar", weather.stem, "--out", str(pred_csv)]) == 0
    rows = list(csv.DictReader(open(pred_csv)))
    assert len(rows) in (3 * 251, 2 * 251 + 252, 251 + 2 * 252, 3 * 252)
    assert all(np.isfinite(float(r["pred_lte50"])) for r in rows)
    assert main(["predict", "--checkpoint", str(run / "model.ckpt"), "--weather", str(weather),
                 "--cultivar", "nobody", "--out", str(pred_csv)]) == 2


def test_stl_train_needs_cultivar(tmp_path, synth_dir):
    cfg = tmp_path / "tiny.ini"
    cfg.write_text(TINY_INI)
    assert main(["train", "--data", str(synth_dir), "--config", str(cfg),
                 "--out", str(tmp_path / "r")]) == 1


def test_tune_ferguson(tmp_path, synth_dir):
    cfg = tmp_path / "tiny.ini"
    cfg.write_text(TINY_INI)
    assert main(["tune-ferguson", "--data", str(synth_dir), "--config", str(cfg),
                 "--cultivar", "0", "--out", str(tmp_path / "r")]) == 0
    text = (only_run(tmp_path / "r") / "ferguson.txt").read_text()
    assert "t_th" in text and "rmse" in text
    assert text.startswith("# Ferguson: thermal-time reconstruction")


def test_compare_writes_outputs(tmp_path, synth_dir):
    cfg = tmp_path / "tiny.ini"
    cfg.write_text(TINY_INI)
    assert main(["compare", "--data", str(synth_dir), "--config", str(cfg),
                 "--out", str(tmp_path / "r")]) == 0
    run = only_run(tmp_path / "r")
    table = (run / "table.csv").read_text().splitlines()
    assert table[0] == "cultivar,MultE,ConcatE,AddE,MultiH,Single,Ferguson"
    assert len(table) == 4
    assert len(list((run / "predictions").glob("trial0_*.csv"))) == 6
    assert "reconstruction" in (run / "notes.txt").read_text()


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--per-block", "3"]) == 0
    out = capsys.readouterr().out
    assert "max relative error" in out and "MultE" in out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "coldhardy", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "gradcheck" in res.stdout
