"""The five training schedules, side by side on one small task.

baseline    fine labels from the first epoch
continuous  one model, coarse levels first, then fine (label switching)
staged      one model per level; encoder transferred, predictor reset
multitask   fine CE plus the coarse losses on every batch
spl         self-paced: fit low-loss samples first, grow the threshold

All five share the trainer core, so a given (seed, schedule) pair is exactly
reproducible, and the curriculum schedules are budget-matched to the
baseline's realized epoch count.
"""

import numpy as np

from coarse2fine import curriculum as cu
from coarse2fine import datagen as dg
from coarse2fine import hierarchy as hi
from coarse2fine import netcore as nc
from coarse2fine import similarity as si

SEED = 0

ds = dg.generate("vectors", {"dim": 12, "num_classes": 8, "tree_depth": 3,
                             "level_scales": [5.0, 2.0, 1.0],
                             "samples_per_class": 60}, seed=10)
train, val = dg.split_and_subsample(ds, 0.2, None, seed=11)
test = dg.generate("vectors", {"dim": 12, "num_classes": 8, "tree_depth": 3,
                               "level_scales": [5.0, 2.0, 1.0],
                               "samples_per_class": 25}, seed=12)
splits = cu.Splits(train_x=train.data, train_y=train.labels,
                   val_x=val.data, val_y=val.labels,
                   test_x=test.data, test_y=test.labels)

spec = nc.ModelSpec(input_shape=(12,), layers=(nc.dense(16), nc.relu()),
                    num_classes=8)
opt = nc.adam(lr=0.01)
cfg = cu.CurriculumConfig(max_epochs=40, early_stop_patience=12, batch_size=32)

base = cu.train_baseline(spec, splits, opt, cfg, SEED)
budget = base.total_epochs

# hierarchy from the baseline's own class embeddings
dist = si.build_metric("embedding_dist", embeddings=base.best_params.w)
h = hi.affinity_cluster(dist, class_names=ds.class_names)

# curriculum length from the baseline's validation curve (first epoch that
# reaches 90% of the best validation accuracy)
t = cu.curriculum_length(base.val_curve(), "auto-text")
print(f"baseline ran {budget} epochs; derived curriculum length T={t}")
print(f"hierarchy level sizes: {[len(l) for l in h.levels]}\n")

runs = {"baseline": base}
runs["continuous"] = cu.train_continuous(spec, splits, h, opt, cfg, SEED,
                                         t_epochs=t, budget=budget)
runs["staged"] = cu.train_staged(spec, splits, h, opt, cfg, SEED)
runs["multitask"] = cu.train_multitask(spec, splits, h, opt, cfg, SEED,
                                       budget=budget)
runs["spl"] = cu.train_spl(spec, splits, opt, cu.SplConfig(), cfg, SEED,
                           budget=budget)

print(f"{'schedule':<11} {'epochs':>6} {'best val':>9} {'test acc':>9}")
for name, rep in runs.items():
    print(f"{name:<11} {rep.total_epochs:>6} {rep.best_val_acc:>9.3f} "
          f"{rep.test_acc:>9.3f}")

cont = runs["continuous"]
print(f"\ncontinuous spent {cont.extras['epoch_split']} epochs on the coarse "
      f"levels, then trained fine labels; per-epoch log tags each row with "
      f"its level (during coarse epochs only the cluster accuracy is "
      f"meaningful):")
for row in cont.rows[: t + 2]:
    print(f"  epoch {row.epoch}: level {row.level}, fine val {row.val_acc:.3f},"
          f" cluster val {row.val_acc_cluster:.3f}")
print("  ...")
