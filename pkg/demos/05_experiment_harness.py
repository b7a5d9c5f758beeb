"""A full seeded comparison, end to end.

The harness runs a (seeds x training-set sizes) grid, pairs every curriculum
run against the same-seed baseline, and writes a report bundle: summary.json
(byte-deterministic), summary.csv, per-run curve CSVs, per-seed hierarchy
JSONs, and an SVG chart with stderr bands.
"""

import json
import os
import tempfile

from coarse2fine import harness as ha

cfg = ha.experiment_config_from_dict({
    "dataset": {"kind": "vectors", "dim": 12, "num_classes": 8,
                "tree_depth": 3, "level_scales": [5.0, 2.0, 1.0],
                "noise_scale": 2.5},
    "model": {"layers": [["dense", 16], "relu"]},
    "optimizer": {"kind": "adam", "lr": 0.01},
    "methods": ["baseline", "continuous"],
    "metric_kind": "embedding_dist",
    "seeds": [0, 1, 2],
    "train_counts": [20, 60],
    "t_mode": "fixed",
    "t": 4,
    "max_epochs": 30,
    "early_stop_patience": 10,
    "batch_size": 32,
    "test_samples_per_class": 25,
})

result = ha.run_experiment(cfg)
out = tempfile.mkdtemp(prefix="c2f_demo_")
ha.emit_reports(result, out)
print(f"report bundle in {out}:")
for root, _, files in os.walk(out):
    for f in sorted(files):
        rel = os.path.relpath(os.path.join(root, f), out)
        print(f"  {rel}")

print("\npaired gains (continuous - baseline, same seed):")
for cell in result["summary"]["cells"]:
    m = cell["methods"]["continuous"]
    per_seed = ", ".join(f"seed {s}: {g:+.3f}"
                         for s, g in sorted(m["gain_per_seed"].items()))
    print(f"  {cell['train_count']:>3}/class: mean {m['gain_mean']:+.4f} "
          f"+- {m['gain_stderr']:.4f}   ({per_seed})")

# summary.json is byte-deterministic: run it again and compare
result2 = ha.run_experiment(cfg)
a = json.dumps(result["summary"], sort_keys=True)
b = json.dumps(result2["summary"], sort_keys=True)
print(f"\nsecond run summary identical: {a == b}")
