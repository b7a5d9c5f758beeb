"""Coarse-to-fine curriculum learning on class hierarchies.

The pieces, bottom to top:

- `netcore`: a small deterministic numpy network engine (conv/pool/dense,
  softmax cross-entropy, SGD/Adam).
- `datagen`: synthetic image/vector dataset generators with hierarchical
  label structure, plus a binary on-disk dataset format.
- `similarity`: class-distance matrices from embeddings, confusion
  estimates, or random ranks.
- `hierarchy`: bottom-up affinity clustering of the distance matrix into a
  multi-level label hierarchy, plus structural validation.
- `curriculum`: the marginalized cross-entropy loss and the training
  schedules built on it (continuous, staged, multitask, self-paced,
  baseline).
- `harness`: paired multi-seed experiments, summary/plot emission, and
  checkpoints.
"""

from .netcore import (ModelParams, ModelSpec, ShapeError, adam,
                      apply_gradients, backward, conv3x3, dense, evaluate,
                      features, flatten, forward, init_params, maxpool2x2,
                      relu, sgd, softmax_cross_entropy)
from .datagen import (Dataset, DatasetError, DatasetFormatError, BlobsConfig,
                      ShapesConfig, VectorsConfig, gen_blobs, gen_shapes,
                      gen_vectors, generate, load_cifar_binary, load_dataset,
                      save_dataset, split_and_subsample)
from .similarity import (METRIC_KINDS, MetricError, build_metric,
                         confusion_from_predictions, embedding_distance,
                         estimate_confusion, load_matrix_csv,
                         save_matrix_csv)
from .hierarchy import (HierarchyError, LabelHierarchy, affinity_cluster,
                        load_hierarchy, project_map, save_hierarchy,
                        singleton_hierarchy, validate_hierarchy)
from .curriculum import (CurriculumConfig, CurriculumError, DivergenceError,
                         Splits, SplConfig, TrainReport, curriculum_length,
                         marginalized_cross_entropy, split_epochs,
                         train_baseline, train_continuous, train_multitask,
                         train_spl, train_staged, transform_labels)
from .harness import (ConfigError, ExperimentConfig, TrainJobConfig,
                      emit_reports, emit_sweep, experiment_config_from_dict,
                      load_checkpoint, run_cell, run_experiment,
                      run_train_job, save_checkpoint, sweep)

__version__ = "0.1.0"
