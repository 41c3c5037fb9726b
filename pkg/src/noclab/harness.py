"""Declarative experiment runner.

Runs the experiment grid on procedurally generated data: architecture
sweep, learning-regime sweep, the four blur data/net/SVM combos, and
RGB vs RGB+orientation fusion. Every run is a pure function of
(config, seed) and emits deterministic CSV artifacts.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import datapipe as dp
from . import evaluate as ev
from . import nets, optim
from .errors import ConfigError, InvalidValue

EXPERIMENTS = ("arch_sweep", "regime_sweep", "blur_combo", "fusion")
REGIMES = ("1LR", "2LR", "3LR")
COMBOS = ("N-N-N", "N-B-B", "B-N-N", "B-B-B")

DEFAULTS = {
    "experiment": "regime_sweep",
    "seed": 0,
    "output_dir": "runs/out",
    "dataset.classes": 16,
    "dataset.per_class": 100,
    "dataset.size": 32,
    "dataset.motion": "none",  # none | correlated | uncorrelated
    "arch.arch_id": "C1F3",
    "arch.width_scale": 1.0 / 32.0,
    "backbone.channels": 16,
    "regime.name": "3LR",
    "regime.alpha": 0.001,
    "regime.alpha_start": 0.01,
    "regime.alpha_end": 0.005,
    "regime.beta": 0.9,
    "regime.gamma": 0.9,
    "regime.epsilon": 1e-8,
    "regime.iterations": 150,
    "regime.batch_size": 32,
    "regime.partitions": 3,
    "regime.standard_ewma": False,
    "blur.kind": "gaussian",
    "blur.sigma": 2.0,
    "blur.sigma_min": 0.2,   # per-image sigma range for the blur combos;
    "blur.sigma_max": 3.0,   # set min == max to force a fixed sigma
    "blur.length": 9,
    "blur.angle": 0.0,
    "blur.noise": 0.02,      # post-blur sensor noise std
    "combo": "N-N-N",
    "fusion.orientation_scale": 0.3,  # orientation-stream weight in sum fusion
    "svm.c_reg": 1.0,
    "svm.epochs": 10,
}

_ENUMS = {
    "experiment": EXPERIMENTS,
    "dataset.motion": ("none", "correlated", "uncorrelated"),
    "arch.arch_id": nets.ARCH_IDS,
    "regime.name": REGIMES,
    "blur.kind": ("gaussian", "motion"),
    "combo": COMBOS,
}

_OPEN_UNIT = ("regime.beta", "regime.gamma")  # must lie in (0,1)


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self):
        return int(self.values["seed"])

    def hyper(self):
        v = self.values
        return optim.Hyper(
            alpha=float(v["regime.alpha"]),
            alpha_start=float(v["regime.alpha_start"]),
            alpha_end=float(v["regime.alpha_end"]),
            beta=float(v["regime.beta"]),
            gamma=float(v["regime.gamma"]),
            epsilon=float(v["regime.epsilon"]),
            iterations=int(v["regime.iterations"]),
            batch_size=int(v["regime.batch_size"]),
            standard_ewma=bool(v["regime.standard_ewma"]),
        )


def _coerce(key, raw, lineno=None):
    where = f" (line {lineno})" if lineno is not None else ""
    default = DEFAULTS[key]
    if isinstance(default, bool):
        if str(raw).lower() in ("true", "1", "yes"):
            return True
        if str(raw).lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected boolean, got {raw!r}{where}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected int, got {raw!r}{where}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected number, got {raw!r}{where}") from None
    return str(raw)


def _validate(key, value, lineno=None):
    where = f" (line {lineno})" if lineno is not None else ""
    if key in _ENUMS and value not in _ENUMS[key]:
        raise ConfigError(f"{key}: {value!r} not one of {_ENUMS[key]}{where}")
    if key in _OPEN_UNIT and not (0 < value < 1):
        raise ConfigError(f"{key}: {value} outside (0, 1){where}")
    if key == "regime.batch_size" and value < 1:
        raise ConfigError(f"regime.batch_size must be >= 1{where}")
    if key == "arch.width_scale" and not (0 < value <= 1):
        raise ConfigError(f"arch.width_scale outside (0, 1]{where}")
    if key in ("blur.sigma", "blur.sigma_min", "blur.sigma_max") and value <= 0:
        raise ConfigError(f"{key} must be > 0{where}")
    if key == "blur.noise" and value < 0:
        raise ConfigError(f"blur.noise must be >= 0{where}")
    if key == "fusion.orientation_scale" and value < 0:
        raise ConfigError(f"fusion.orientation_scale must be >= 0{where}")
    return value


def parse_config(path=None, overrides=None):
    """Load a flat `key = value` config file; `#` starts a comment.
    Overrides (a dict) beat file values; unknown keys are rejected."""
    cfg = ExperimentConfig()
    if path is not None:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                body = line.split("#", 1)[0].strip()
                if not body:
                    continue
                if "=" not in body:
                    raise ConfigError(f"line {lineno}: expected key = value")
                key, _, raw = body.partition("=")
                key = key.strip()
                raw = raw.strip()
                if key not in DEFAULTS:
                    raise ConfigError(f"unknown key {key!r} (line {lineno})")
                cfg.values[key] = _validate(key, _coerce(key, raw, lineno), lineno)
    for key, raw in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown override key {key!r}")
        value = _coerce(key, raw) if isinstance(raw, str) else raw
        cfg.values[key] = _validate(key, value)
    return cfg


# ---------------------------------------------------------------------------
# dataset plumbing


def _motion_mode(cfg):
    m = cfg["dataset.motion"]
    return False if m == "none" else m


def build_dataset(cfg):
    records, clips = dp.gen_synthetic_dataset(
        num_classes=int(cfg["dataset.classes"]),
        per_class=int(cfg["dataset.per_class"]),
        size=int(cfg["dataset.size"]),
        motion=_motion_mode(cfg),
        seed=cfg.seed,
    )
    return records, clips


def stratified_split(labels, test_frac=0.2, seed=0):
    """Disjoint stratified train/test index split."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        cut = max(1, int(round(len(idx) * test_frac)))
        test.extend(idx[:cut])
        train.extend(idx[cut:])
    train = sorted(int(i) for i in train)
    test = sorted(int(i) for i in test)
    assert not set(train) & set(test)
    return train, test


def extract_features(backbone, frames, batch=64):
    """Frozen-backbone feature maps, stacked (n, c, h, w).

    Each sample is standardized (zero mean, unit std) so the heads see
    patterns rather than global contrast or blur-induced scale shifts.
    """
    frozen = backbone.frozen()
    out = []
    X = np.stack([f.pixels for f in frames])
    for i in range(0, len(X), batch):
        out.append(nets.forward(frozen, ad.Tensor(X[i:i + batch])).data)
    feats = np.concatenate(out)
    mean = feats.mean(axis=(1, 2, 3), keepdims=True)
    std = feats.std(axis=(1, 2, 3), keepdims=True)
    return (feats - mean) / np.maximum(std, 1e-8)


def _head_arch(cfg, input_shape, arch_id=None):
    return nets.NocArch(
        arch_id=arch_id or cfg["arch.arch_id"],
        input_shape=tuple(input_shape),
        num_classes=int(cfg["dataset.classes"]),
        width_scale=float(cfg["arch.width_scale"]),
    )


def train_head(cfg, arch, X, labels, regime, loss_rows):
    """Train one head on precomputed features under a named regime."""
    hyper = cfg.hyper()
    head = nets.build_noc(arch, seed=cfg.seed)
    parts = int(cfg["regime.partitions"])
    labels = np.asarray(labels)
    assignments = np.arange(len(labels)) % parts
    if regime in ("1LR", "2LR"):
        # sequential chaining: the net trained on one partition trains the next
        for j in range(parts):
            idx = np.flatnonzero(assignments == j)
            batches = optim.make_batches(X[idx], labels[idx], hyper.batch_size,
                                         seed=cfg.seed + j)
            _, rows = train_epoch_logged(head, batches, regime, hyper)
            loss_rows.extend((t + j * hyper.iterations, j, a, l)
                             for (t, _, a, l) in rows)
    elif regime == "3LR":
        plan = optim.PartitionPlan(parts, tuple(int(a) for a in assignments),
                                   hyper.iterations)
        head = optim.train_partitioned(head, X, labels, plan, hyper,
                                       seed=cfg.seed, loss_trace=loss_rows)
    else:
        raise InvalidValue(f"unknown regime {regime!r}")
    return head


def train_epoch_logged(head, batches, regime, hyper):
    return optim.train_epoch(head, batches, regime, hyper)


def head_accuracy(head, X, labels):
    frozen = head.frozen()
    logits = nets.forward(frozen, ad.Tensor(X)).data
    return 100.0 * float((logits.argmax(axis=1) == np.asarray(labels)).mean())


def head_penultimate(head, X, batch=256):
    frozen = head.frozen()
    out = []
    for i in range(0, len(X), batch):
        out.append(nets.penultimate_features(frozen, ad.Tensor(X[i:i + batch])).data)
    return np.concatenate(out)


def svm_accuracy(cfg, head, X_train, y_train, X_test, y_test):
    """SVM on L2-normalized penultimate features; returns (accuracy, Metrics)."""
    ftr = ev.l2_normalize_rows(head_penultimate(head, X_train))
    fte = ev.l2_normalize_rows(head_penultimate(head, X_test))
    model = ev.svm_train(ftr, y_train, c_reg=float(cfg["svm.c_reg"]),
                         epochs=int(cfg["svm.epochs"]), seed=cfg.seed)
    pred = ev.svm_predict(model, fte)
    metrics = ev.compute_metrics(pred, y_test,
                                 background_class=int(cfg["dataset.classes"]) - 1,
                                 num_classes=int(cfg["dataset.classes"]))
    return metrics.accuracy, metrics


# ---------------------------------------------------------------------------
# experiment drivers


@dataclass
class RunArtifact:
    output_dir: str
    metrics_rows: list  # (method, regime, split, accuracy, false_alarms)
    files: dict = field(default_factory=dict)  # label -> path

    def path(self, name):
        return os.path.join(self.output_dir, name)


def _store_loss_csv(artifact, name, rows):
    path = artifact.path(name)
    with open(path, "w", newline="") as fh:
        fh.write("step,partition,alpha,loss\n")
        for step, part, alpha, loss in rows:
            a = "" if alpha is None else f"{alpha:.10g}"
            fh.write(f"{step},{part},{a},{loss:.10g}\n")
    artifact.files[name] = path


def _store_metrics_csv(artifact):
    path = artifact.path("metrics.csv")
    with open(path, "w", newline="") as fh:
        fh.write("method,regime,split,accuracy,false_alarms\n")
        for row in sorted(artifact.metrics_rows):
            method, regime, split, acc, fa = row
            fh.write(f"{method},{regime},{split},{acc:.1f},{fa}\n")
    artifact.files["metrics.csv"] = path


def _store_confusion_csv(artifact, name, metrics):
    path = artifact.path(name)
    with open(path, "w", newline="") as fh:
        k = metrics.confusion.shape[0]
        fh.write(",".join(["truth\\pred"] + [str(c) for c in range(k)]) + "\n")
        for r in range(k):
            fh.write(",".join([str(r)] + [str(int(x)) for x in metrics.confusion[r]]) + "\n")
    artifact.files[name] = path


def _store_embedding_csv(artifact, name, coords, labels, sources):
    path = artifact.path(name)
    with open(path, "w", newline="") as fh:
        fh.write("x,y,class_id,source\n")
        for (x, y), cls, src in zip(coords, labels, sources):
            fh.write(f"{x:.6f},{y:.6f},{int(cls)},{src}\n")
    artifact.files[name] = path


def _store_manifest(artifact):
    path = artifact.path("manifest.csv")
    with open(path, "w", newline="") as fh:
        fh.write("name,path\n")
        for name in sorted(artifact.files):
            rel = os.path.relpath(artifact.files[name], artifact.output_dir)
            fh.write(f"{name},{rel}\n")


def emit_csv(rows, header, path):
    """Write rows (iterables of str-able values) as LF-terminated CSV."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def emit_table(artifact):
    """Aligned text table of the collected metrics, one row per
    (method, regime), accuracy to one decimal."""
    rows = sorted(artifact.metrics_rows)
    header = ("method", "regime", "split", "accuracy", "false_alarms")
    cells = [header] + [
        (m, r, s, f"{a:.1f}", str(fa)) for m, r, s, a, fa in rows
    ]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    lines = []
    for row in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def _echo_config(cfg, artifact):
    path = artifact.path("config.txt")
    with open(path, "w") as fh:
        for key in sorted(cfg.values):
            fh.write(f"{key} = {cfg.values[key]}\n")
    artifact.files["config.txt"] = path


def run_experiment(cfg: ExperimentConfig) -> RunArtifact:
    out_dir = cfg["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    artifact = RunArtifact(output_dir=out_dir, metrics_rows=[])
    _echo_config(cfg, artifact)

    experiment = cfg["experiment"]
    if experiment == "fusion":
        _run_fusion(cfg, artifact)
    elif experiment == "blur_combo":
        _run_blur_combo(cfg, artifact)
    elif experiment == "arch_sweep":
        _run_sweep(cfg, artifact, archs=list(nets.ARCH_IDS),
                   regimes=[cfg["regime.name"]])
    else:  # regime_sweep
        _run_sweep(cfg, artifact, archs=[cfg["arch.arch_id"]],
                   regimes=list(REGIMES))

    _store_metrics_csv(artifact)
    with open(artifact.path("table.txt"), "w") as fh:
        fh.write(emit_table(artifact))
    artifact.files["table.txt"] = artifact.path("table.txt")
    _store_manifest(artifact)
    return artifact


def _prepare_features(cfg, records):
    labels = np.array([r.class_id for r in records])
    train_idx, test_idx = stratified_split(labels, 0.2, cfg.seed)
    backbone = nets.build_backbone((3, int(cfg["dataset.size"]),
                                    int(cfg["dataset.size"])),
                                   int(cfg["backbone.channels"]),
                                   seed=cfg.seed + 1)
    feats = extract_features(backbone, [r.image for r in records])
    return backbone, feats, labels, train_idx, test_idx


def _run_sweep(cfg, artifact, archs, regimes):
    records, _ = build_dataset(cfg)
    backbone, feats, labels, tr, te = _prepare_features(cfg, records)
    fshape = feats.shape[1:]
    for arch_id in archs:
        for regime in regimes:
            loss_rows = []
            arch = _head_arch(cfg, fshape, arch_id=arch_id)
            head = train_head(cfg, arch, feats[tr], labels[tr], regime, loss_rows)
            _store_loss_csv(artifact, f"loss_{arch_id}_{regime}.csv", loss_rows)
            nn_acc = head_accuracy(head, feats[te], labels[te])
            svm_acc, metrics = svm_accuracy(cfg, head, feats[tr], labels[tr],
                                            feats[te], labels[te])
            artifact.metrics_rows.append((arch_id, regime, "net", nn_acc, 0))
            artifact.metrics_rows.append((arch_id, regime, "svm", svm_acc,
                                          metrics.false_alarms))
            _store_confusion_csv(artifact, f"confusion_{arch_id}_{regime}.csv",
                                 metrics)
            mpath = artifact.path(f"model_{arch_id}_{regime}.noc")
            nets.save_model(head, mpath)
            artifact.files[os.path.basename(mpath)] = mpath
    # embedding of test features through the last trained head
    pen = ev.l2_normalize_rows(head_penultimate(head, feats[te]))
    coords, _, _ = ev.pca_project(pen, 2, seed=cfg.seed)
    _store_embedding_csv(artifact, "embedding.csv", coords, labels[te],
                         [records[i].source for i in te])


def _blur_frames(cfg, frames):
    """Blurred variant of a frame list.

    Each frame draws its own blur strength from [sigma_min, sigma_max]
    and gains a little post-blur sensor noise, so a net trained on the
    variant sees a span from near-sharp to heavily smoothed.
    """
    rng = np.random.default_rng(cfg.seed + 17)
    lo = float(cfg["blur.sigma_min"])
    hi = float(cfg["blur.sigma_max"])
    if hi < lo:
        raise ConfigError("blur.sigma_max below blur.sigma_min")
    noise = float(cfg["blur.noise"])
    out = []
    for f in frames:
        sigma = rng.uniform(lo, hi) if hi > lo else lo
        out.append(dp.synth_blur(f, kind=cfg["blur.kind"], sigma=sigma,
                                 length=int(cfg["blur.length"]),
                                 angle=float(cfg["blur.angle"]),
                                 noise=noise, seed=int(rng.integers(1 << 31))))
    return out


def _run_blur_combo(cfg, artifact):
    records, _ = build_dataset(cfg)
    labels = np.array([r.class_id for r in records])
    tr, te = stratified_split(labels, 0.2, cfg.seed)
    size = int(cfg["dataset.size"])
    backbone = nets.build_backbone((3, size, size), int(cfg["backbone.channels"]),
                                   seed=cfg.seed + 1)
    frames_n = [r.image for r in records]
    frames_b = _blur_frames(cfg, frames_n)
    feats = {"N": extract_features(backbone, frames_n),
             "B": extract_features(backbone, frames_b)}
    fshape = feats["N"].shape[1:]

    combo = cfg["combo"]
    data_v, net_v, svm_v = combo.split("-")
    # the SVM always trains on features from the net variant under test
    assert net_v == svm_v, "unsupported combo"
    regime = cfg["regime.name"]
    loss_rows = []
    arch = _head_arch(cfg, fshape)
    head = train_head(cfg, arch, feats[net_v][tr], labels[tr], regime, loss_rows)
    _store_loss_csv(artifact, f"loss_{combo}.csv", loss_rows)
    svm_acc, metrics = svm_accuracy(cfg, head, feats[svm_v][tr], labels[tr],
                                    feats[data_v][te], labels[te])
    nn_acc = head_accuracy(head, feats[data_v][te], labels[te])
    artifact.metrics_rows.append((combo, regime, "net", nn_acc, 0))
    artifact.metrics_rows.append((combo, regime, "svm", svm_acc,
                                  metrics.false_alarms))
    _store_confusion_csv(artifact, f"confusion_{combo}.csv", metrics)
    mpath = artifact.path(f"model_{combo}.noc")
    nets.save_model(head, mpath)
    artifact.files[os.path.basename(mpath)] = mpath


def _run_fusion(cfg, artifact):
    if _motion_mode(cfg) is False:
        raise ConfigError("fusion experiment needs dataset.motion set")
    records, _ = build_dataset(cfg)
    labels = np.array([r.class_id for r in records])
    tr, te = stratified_split(labels, 0.2, cfg.seed)
    size = int(cfg["dataset.size"])
    chans = int(cfg["backbone.channels"])
    backbone_i = nets.build_backbone((3, size, size), chans, seed=cfg.seed + 1)
    backbone_o = nets.build_backbone((3, size, size), chans, seed=cfg.seed + 2)
    rgb = [r.image for r in records]
    # orientation maps are single-channel; replicate to the 3-channel input
    orient = [dp.Frame(np.repeat(r.orientation.pixels, 3, axis=0)) for r in records]
    f_rgb = extract_features(backbone_i, rgb)
    # the orientation stream is down-weighted before the sum so an
    # uninformative stream degrades the fused features only mildly
    f_or = float(cfg["fusion.orientation_scale"]) * extract_features(backbone_o, orient)
    f_fused = f_rgb + f_or
    fshape = f_rgb.shape[1:]
    regime = cfg["regime.name"]
    for method, feats in (("rgb_only", f_rgb), ("rgb_plus_orientation", f_fused)):
        loss_rows = []
        arch = _head_arch(cfg, fshape)
        head = train_head(cfg, arch, feats[tr], labels[tr], regime, loss_rows)
        _store_loss_csv(artifact, f"loss_{method}.csv", loss_rows)
        nn_acc = head_accuracy(head, feats[te], labels[te])
        svm_acc, metrics = svm_accuracy(cfg, head, feats[tr], labels[tr],
                                        feats[te], labels[te])
        artifact.metrics_rows.append((method, regime, "net", nn_acc, 0))
        artifact.metrics_rows.append((method, regime, "svm", svm_acc,
                                      metrics.false_alarms))
        _store_confusion_csv(artifact, f"confusion_{method}.csv", metrics)
