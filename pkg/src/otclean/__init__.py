"""Clean, class-balanced subset extraction from noisy long-tailed embeddings
via entropic optimal transport against reweighted class prototypes."""
from .classifier import LinearModel, nearest_prototype_predict, predict, train_on_subset, train_softmax
from .cost import cosine_cost, cost_matrix, euclidean_cost
from .datamodel import (ClassWeights, EmbeddingSet, ExtractionResult, LabelTable, PrototypeBank,
                        TransportPlan, validate_dataset)
from .errors import ConvergenceWarning, OTCleanError
from .labeling import build_prototypes, calibrate_prototypes, filter_clean, pseudo_label, soft_scores
from .metrics import (binary_auc, imbalance_factor, noise_ratio, per_class_accuracy, pseudo_label_quality,
                      shot_partition_report)
from .ot import SinkhornConfig, exact_ot, plan_objective, sinkhorn
from .pipeline import EpochReport, PipelineConfig, PipelineResult, run_epoch, run_pipeline, train_on_observed
from .simkit import (SimSpec, class_means, inject_asymmetric_noise, inject_joint_noise, inject_symmetric_noise,
                     longtail_counts, sample_gaussian_mixture)
from .weighting import class_weights, effective_number_weights, inverse_frequency_weights, uniform_weights

__version__ = "0.1.0"
