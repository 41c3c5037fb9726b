"""Train one classifier head under the three learning regimes and
compare their loss traces.

1LR: SGD with a learning rate decaying linearly 0.01 -> 0.005.
2LR: RMSProp at a fixed rate.
3LR: per-partition covariance-preconditioned training; the partition
     clones are trained independently and their parameters averaged.

Run: python3 demos/02_training_regimes.py
"""

import numpy as np

from noclab import harness

cfg = harness.parse_config(None, {
    "dataset.classes": 6, "dataset.per_class": 30, "dataset.size": 16,
    "regime.iterations": 120, "seed": 0,
})

records, _ = harness.build_dataset(cfg)
_, feats, labels, tr, te = harness._prepare_features(cfg, records)
arch = harness._head_arch(cfg, feats.shape[1:])
print(f"dataset: {len(records)} samples, features {feats.shape[1:]}, "
      f"head {arch.arch_id} (fc width {arch.fc_width})")

for regime in ("1LR", "2LR", "3LR"):
    rows = []
    head = harness.train_head(cfg, arch, feats[tr], labels[tr], regime, rows)
    losses = [l for *_, l in rows]
    acc = harness.head_accuracy(head, feats[te], labels[te])
    print(f"{regime}: first-10 loss {np.mean(losses[:10]):.3f} -> "
          f"last-10 loss {np.mean(losses[-10:]):.3f}, test accuracy {acc:.1f}%")

# The 3LR trace interleaves three partitions; each partition's clone
# starts from the same initialization and the final model is the mean.
rows = []
harness.train_head(cfg, arch, feats[tr], labels[tr], "3LR", rows)
parts = sorted({p for _, p, _, _ in rows})
print(f"3LR trained {len(parts)} partition clones "
      f"({len(rows) // len(parts)} steps each) before averaging")
