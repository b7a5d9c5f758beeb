"""From a trained model to a label hierarchy.

Train a small classifier on the Gaussian-vectors task (whose classes really
do come from a binary tree), read class-to-class distances out of the model,
and cluster them.  Affinity clustering merges every cluster with its nearest
neighbour each round, so the tree has at most ~log2(K) levels.
"""

import numpy as np

from coarse2fine import curriculum as cu
from coarse2fine import datagen as dg
from coarse2fine import hierarchy as hi
from coarse2fine import netcore as nc
from coarse2fine import similarity as si

# ground truth: 8 classes from a depth-3 tree; siblings differ the least,
# and the noise is large enough that the model keeps confusing them
VEC = {"dim": 16, "num_classes": 8, "tree_depth": 3,
       "level_scales": [7.0, 3.0, 1.0], "noise_scale": 2.0}
ds = dg.generate("vectors", {**VEC, "samples_per_class": 80}, seed=0)
train, val = dg.split_and_subsample(ds, 0.2, None, seed=1)
test = dg.generate("vectors", {**VEC, "samples_per_class": 20}, seed=99)
splits = cu.Splits(train_x=train.data, train_y=train.labels,
                   val_x=val.data, val_y=val.labels,
                   test_x=test.data, test_y=test.labels)

spec = nc.ModelSpec(input_shape=(16,), layers=(nc.dense(32), nc.relu()),
                    num_classes=8)
cfg = cu.CurriculumConfig(max_epochs=30, early_stop_patience=10, batch_size=64)
report = cu.train_baseline(spec, splits, nc.adam(lr=0.01), cfg, seed=0)
print(f"trained {report.total_epochs} epochs, test acc {report.test_acc:.3f}")

# distance metric 1: angles between the predictor's class embedding columns
dist = si.build_metric("embedding_dist", embeddings=report.best_params.w)
h = hi.affinity_cluster(dist, class_names=ds.class_names)
print(f"\nembedding-distance hierarchy ({h.num_levels} levels):")
for li, level in enumerate(h.levels):
    named = [[ds.class_names[c] for c in cluster] for cluster in level]
    print(f"  level {li}: {named}")
print("problems:", hi.validate_hierarchy(h, 8) or "none")

# distance metric 2: symmetrized confusion on held-out data
conf = si.estimate_confusion(spec, report.best_params,
                             cu.as_model_input(splits.val_x), splits.val_y)
dist_c = si.build_metric("confusion_dist", confusion=conf)
h_conf = hi.affinity_cluster(dist_c, class_names=ds.class_names)
print(f"\nconfusion-distance hierarchy level sizes: "
      f"{[len(l) for l in h_conf.levels]}")

# hierarchies serialize to JSON and project labels between levels
text = hi.hierarchy_to_json(h)
h2 = hi.hierarchy_from_json(text)
assert h2.levels == h.levels
fine_labels = np.array([0, 3, 7])
coarse = cu.transform_labels(fine_labels, h.levels[0])
print(f"\nfine {fine_labels.tolist()} -> level-0 clusters {coarse.tolist()}")
