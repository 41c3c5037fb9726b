"""CLI verb tests (gen / train / eval / grid / plotdata)."""

import os

import numpy as np
import pytest

from noclab import cli

SMALL = [
    "--set", "dataset.classes=3",
    "--set", "dataset.per_class=8",
    "--set", "dataset.size=16",
    "--set", "regime.iterations=5",
    "--set", "svm.epochs=2",
]


def run(args):
    return cli.main(args)


def test_gen_writes_images_and_manifest(tmp_path, capsys):
    out = str(tmp_path / "gen")
    assert run(["gen", "--output-dir", out, "--seed", "1"] + SMALL) == 0
    names = os.listdir(out)
    assert "manifest.csv" in names
    ppms = [n for n in names if n.endswith(".ppm")]
    assert len(ppms) == 24
    header = open(os.path.join(out, "manifest.csv")).readline().strip()
    assert header == "path,class_id,source,partition"


def test_gen_emits_orientation_maps_with_motion(tmp_path):
    out = str(tmp_path / "genm")
    assert run(["gen", "--output-dir", out, "--set", "dataset.motion=correlated",
                "--set", "dataset.per_class=2"] + SMALL[:6]) == 0
    assert any(n.endswith(".pgm") for n in os.listdir(out))


def test_train_writes_model_and_loss(tmp_path, capsys):
    out = str(tmp_path / "tr")
    assert run(["train", "--output-dir", out, "--set", "regime.name=1LR"]
               + SMALL) == 0
    names = os.listdir(out)
    assert "loss.csv" in names
    assert any(n.endswith(".noc") for n in names)
    assert "test accuracy" in capsys.readouterr().out


def test_eval_prints_table(tmp_path, capsys):
    out = str(tmp_path / "ev")
    assert run(["eval", "--output-dir", out,
                "--set", "experiment=regime_sweep"] + SMALL) == 0
    text = capsys.readouterr().out
    assert "method" in text and "accuracy" in text


def test_plotdata_emits_embeddings(tmp_path):
    out = str(tmp_path / "pd")
    assert run(["plotdata", "--output-dir", out, "--set", "regime.name=1LR"]
               + SMALL + ["--set", "dataset.per_class=30"]) == 0
    for name in ("pca.csv", "tsne.csv"):
        lines = open(os.path.join(out, name)).read().splitlines()
        assert lines[0] == "x,y,class_id,source"
        assert len(lines) > 1


def test_grid_runs_selected_experiments(tmp_path):
    out = str(tmp_path / "grid")
    assert run(["grid", "--output-dir", out,
                "--experiments", "arch_sweep",
                "--set", "regime.name=1LR"] + SMALL) == 0
    assert os.path.exists(os.path.join(out, "arch_sweep", "metrics.csv"))


def test_config_file_plus_override(tmp_path, capsys):
    p = tmp_path / "c.cfg"
    p.write_text("dataset.classes = 3\ndataset.per_class = 8\n"
                 "dataset.size = 16\nregime.iterations = 5\nsvm.epochs = 2\n")
    out = str(tmp_path / "cf")
    assert run(["eval", "--config", str(p), "--output-dir", out,
                "--set", "experiment=blur_combo", "--set", "combo=N-N-N",
                "--set", "regime.name=1LR"]) == 0


def test_bad_config_returns_error_code(tmp_path, capsys):
    assert run(["eval", "--set", "experiment=party"]) == 1
    assert "error:" in capsys.readouterr().err
    assert run(["eval", "--set", "nonsense"]) == 1


def test_seed_changes_data(tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    run(["gen", "--output-dir", a, "--seed", "1"] + SMALL)
    run(["gen", "--output-dir", b, "--seed", "2"] + SMALL)
    fa = open(os.path.join(a, "img_00000.ppm"), "rb").read()
    fb = open(os.path.join(b, "img_00000.ppm"), "rb").read()
    assert fa != fb
