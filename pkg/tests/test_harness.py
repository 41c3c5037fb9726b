"""Unit tests for config parsing, splits, artifact emission and the
experiment drivers (smoke-scale runs)."""

import os

import numpy as np
import pytest

from noclab import harness
from noclab.errors import ConfigError

SMALL = {
    "dataset.classes": 3,
    "dataset.per_class": 8,
    "dataset.size": 16,
    "regime.iterations": 6,
    "svm.epochs": 3,
}


def small_cfg(tmp_path, **extra):
    over = dict(SMALL)
    over.update(extra)
    over["output_dir"] = str(tmp_path / "out")
    return harness.parse_config(None, over)


# ---------------------------------------------------------------------------
# config parsing


def test_defaults_complete():
    cfg = harness.parse_config()
    assert cfg["experiment"] == "regime_sweep"
    assert cfg["regime.name"] == "3LR"
    assert cfg.hyper().alpha_start == 0.01


def test_parse_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(
        "# comment line\n"
        "experiment = arch_sweep\n"
        "dataset.classes = 5   # trailing comment\n"
        "regime.gamma = 0.8\n"
        "regime.standard_ewma = true\n"
        "\n")
    cfg = harness.parse_config(str(p))
    assert cfg["experiment"] == "arch_sweep"
    assert cfg["dataset.classes"] == 5
    assert cfg["regime.gamma"] == 0.8
    assert cfg["regime.standard_ewma"] is True


@pytest.mark.parametrize("line,fragment", [
    ("bogus.key = 1", "unknown key"),
    ("dataset.classes = soon", "expected int"),
    ("regime.gamma = 1.5", "outside (0, 1)"),
    ("experiment = tuning", "not one of"),
    ("just a line", "expected key = value"),
    ("regime.standard_ewma = maybe", "expected boolean"),
    ("blur.sigma = -1", "must be > 0"),
    ("blur.noise = -0.1", "must be >= 0"),
    ("fusion.orientation_scale = -1", "must be >= 0"),
])
def test_parse_config_rejects(tmp_path, line, fragment):
    p = tmp_path / "bad.cfg"
    p.write_text(line + "\n")
    with pytest.raises(ConfigError) as err:
        harness.parse_config(str(p))
    assert fragment in str(err.value)
    assert "line 1" in str(err.value)


def test_parse_config_override_beats_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("seed = 3\n")
    cfg = harness.parse_config(str(p), {"seed": "9"})
    assert cfg.seed == 9
    with pytest.raises(ConfigError):
        harness.parse_config(None, {"no.such": 1})


# ---------------------------------------------------------------------------
# splits and features


def test_stratified_split_disjoint_and_stratified():
    labels = np.repeat(np.arange(4), 10)
    tr, te = harness.stratified_split(labels, 0.2, seed=0)
    assert not set(tr) & set(te)
    assert len(tr) + len(te) == 40
    for c in range(4):
        assert sum(labels[i] == c for i in te) == 2


def test_extract_features_standardized(tmp_path):
    from noclab import datapipe as dp, nets
    frames = [dp.Frame(np.random.default_rng(i).random((3, 16, 16)))
              for i in range(4)]
    bb = nets.build_backbone((3, 16, 16), 8, seed=0)
    feats = harness.extract_features(bb, frames)
    assert feats.shape[0] == 4
    assert np.allclose(feats.mean(axis=(1, 2, 3)), 0.0, atol=1e-9)
    assert np.allclose(feats.std(axis=(1, 2, 3)), 1.0, atol=1e-6)


# ---------------------------------------------------------------------------
# table / csv emission


def test_emit_table_sorted_one_decimal(tmp_path):
    art = harness.RunArtifact(str(tmp_path), [
        ("b", "1LR", "net", 50.0, 0),
        ("a", "2LR", "svm", 33.3333, 4),
    ])
    text = harness.emit_table(art)
    lines = text.splitlines()
    assert lines[0].split() == ["method", "regime", "split", "accuracy",
                                "false_alarms"]
    assert lines[1].startswith("a")
    assert "33.3" in lines[1] and "50.0" in lines[2]


def test_emit_csv(tmp_path):
    path = tmp_path / "t.csv"
    harness.emit_csv([(1, "x"), (2, "y")], ("n", "s"), str(path))
    assert path.read_text() == "n,s\n1,x\n2,y\n"


# ---------------------------------------------------------------------------
# experiment drivers (smoke scale)


def test_regime_sweep_artifacts(tmp_path):
    cfg = small_cfg(tmp_path, **{"experiment": "regime_sweep"})
    art = harness.run_experiment(cfg)
    base = art.output_dir
    for name in ("metrics.csv", "table.txt", "config.txt", "manifest.csv",
                 "loss_C1F3_1LR.csv", "confusion_C1F3_3LR.csv",
                 "model_C1F3_2LR.noc", "embedding.csv"):
        assert os.path.exists(os.path.join(base, name)), name
    rows = open(os.path.join(base, "metrics.csv")).read().splitlines()
    assert rows[0] == "method,regime,split,accuracy,false_alarms"
    assert len(rows) == 1 + 6  # three regimes x (net, svm)


def test_arch_sweep_covers_all_heads(tmp_path):
    cfg = small_cfg(tmp_path, **{"experiment": "arch_sweep",
                                 "regime.name": "1LR"})
    art = harness.run_experiment(cfg)
    methods = {m for m, *_ in art.metrics_rows}
    assert methods == {"C0F3", "C1F3", "M1"}


def test_blur_combo_run(tmp_path):
    cfg = small_cfg(tmp_path, **{"experiment": "blur_combo", "combo": "B-N-N",
                                 "regime.name": "1LR"})
    art = harness.run_experiment(cfg)
    combos = {m for m, *_ in art.metrics_rows}
    assert combos == {"B-N-N"}
    assert os.path.exists(art.path("loss_B-N-N.csv"))


def test_fusion_requires_motion(tmp_path):
    cfg = small_cfg(tmp_path, **{"experiment": "fusion"})
    with pytest.raises(ConfigError):
        harness.run_experiment(cfg)


def test_fusion_run(tmp_path):
    cfg = small_cfg(tmp_path, **{"experiment": "fusion",
                                 "dataset.motion": "correlated",
                                 "regime.name": "1LR",
                                 "dataset.per_class": 6})
    art = harness.run_experiment(cfg)
    methods = {m for m, *_ in art.metrics_rows}
    assert methods == {"rgb_only", "rgb_plus_orientation"}


def test_loss_csv_schema(tmp_path):
    cfg = small_cfg(tmp_path, **{"experiment": "regime_sweep"})
    art = harness.run_experiment(cfg)
    lines = open(art.path("loss_C1F3_1LR.csv")).read().splitlines()
    assert lines[0] == "step,partition,alpha,loss"
    first = lines[1].split(",")
    assert first[0] == "0" and float(first[2]) == 0.01
    assert float(first[3]) > 0
