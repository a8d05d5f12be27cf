"""Multi-class classifiers from noisy pairwise similarity labels.

A softmax MLP is trained on pairs whose only supervision is whether the two
(noisily labelled) examples share a class. A transition layer maps the clean
class posterior to the noisy one; the transition matrix is either given or
estimated from anchor points of a first-stage model.
"""
from .exceptions import DegenerateClassError, FormatError, InputError, TrainingError
from .nn import (AdamState, GradientBundle, MlpModel, adam_step, backward,
                 finite_diff_gradient, forward_logits, forward_with_cache, init_mlp,
                 load_checkpoint, predict_proba, save_checkpoint, softmax, step_decay)
from .noise import (LabeledDataset, SimilarityPairBatch, check_transition,
                    corrupt_labels, gaussian_blobs, make_similarity_pairs,
                    nearest_mean_predict, simplex_means, symmetric_transition)
from .objective import (batch_pair_loss, corrected_posterior, mcl_loss, mns_loss,
                        pair_metrics, predicted_similarity)
from .estimation import (estimate_from_model, estimate_transition, estimation_error,
                         select_anchors, train_noisy_posterior)
from .training import TrainConfig, TrainResult, train_on_pairs
from .pipeline import (BoundInputs, ExperimentConfig, ExperimentReport,
                       evaluate_classifier, frobenius_norms, generalization_bound,
                       load_config, run_experiment)

__version__ = "0.1.0"

__all__ = [
    'DegenerateClassError', 'FormatError', 'InputError', 'TrainingError', 'AdamState',
    'GradientBundle', 'MlpModel', 'adam_step', 'backward', 'finite_diff_gradient',
    'forward_logits', 'forward_with_cache', 'init_mlp', 'load_checkpoint',
    'predict_proba', 'save_checkpoint', 'softmax', 'step_decay', 'LabeledDataset',
    'SimilarityPairBatch', 'check_transition', 'corrupt_labels', 'gaussian_blobs',
    'make_similarity_pairs', 'nearest_mean_predict', 'simplex_means',
    'symmetric_transition', 'batch_pair_loss', 'corrected_posterior', 'mcl_loss',
    'mns_loss', 'pair_metrics', 'predicted_similarity', 'estimate_from_model',
    'estimate_transition', 'estimation_error', 'select_anchors',
    'train_noisy_posterior', 'TrainConfig', 'TrainResult', 'train_on_pairs',
    'BoundInputs', 'ExperimentConfig', 'ExperimentReport', 'evaluate_classifier',
    'frobenius_norms', 'generalization_bound', 'load_config', 'run_experiment',
]
