"""Partial-label learning toolkit.

Learn multi-class classifiers from candidate label sets: corruption
generators for building partially labeled benchmarks, dense models with
hand-rolled gradients, the confidence-weighted candidate-set risk with
progressive label identification, and a reproducible experiment CLI.
"""

from .data import (
    FlipSpec,
    PartialDataset,
    SupervisedDataset,
    corrupt_binomial,
    corrupt_pair,
    estimate_ambiguity,
    load_csv,
    load_idx,
    load_partial,
    make_gaussian_clusters,
    save_partial,
    split_minibatches,
    stratified_split,
    zscore_normalize,
)
from .evaluate import (
    EvalReport,
    evaluate_model,
    summarize_seeds,
    test_accuracy,
    transductive_accuracy,
)
from .losses import (
    CROSS_ENTROPY,
    MEAN_SQUARED_ERROR,
    best_guess,
    ordinary_loss,
    pll_min_loss,
    weighted_loss,
    weighted_loss_grad_on_probs,
)
from .network import (
    ModelParams,
    backward,
    forward,
    grad_check,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .training import (
    MetricsLog,
    TrainConfig,
    TrainResult,
    empirical_risk,
    train,
    train_pn_decomp,
    train_pn_oracle,
)
from .weighting import (
    Strategy,
    WeightMatrix,
    apply_strategy,
    init_uniform,
    update_progressive,
    update_sudden,
)

__version__ = "0.1.0"
