"""Mini-batched momentum-SGD training of the weighted candidate-set risk.

One engine drives three modes:

- "pll": learn from candidate sets, reshaping the confidence weights with the
  configured strategy after each batch gradient (the weights entering a
  batch's loss are always the pre-update ones),
- "oracle": supervised reference on the hidden true labels,
- "decomposed": expand each instance into one supervised pair per candidate.

The oracle and decomposed modes reduce to the same engine on singleton
candidate sets, so with equal seeds they share initialization, shuffling, and
arithmetic with the pll mode exactly.

Every run is a pure function of (config, data): initialization, shuffling,
and corruption draw from independent seeded streams, so reruns reproduce the
metrics bit-for-bit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import losses
from .data import PartialDataset, SupervisedDataset, split_minibatches
from .errors import ConfigError, DivergenceError, MissingTruthError
from .evaluate import test_accuracy, transductive_accuracy
from .network import LINEAR, MLP, ModelParams, backward, forward, init_params, save_checkpoint
from .rng import stream
from .weighting import (
    BATCH_PHASE,
    EPOCH_END_PHASE,
    Strategy,
    WeightMatrix,
    apply_strategy,
    init_uniform,
)

# Epoch risk above this aborts the run as diverged.
RISK_CEILING = 1e6

MODES = ("pll", "oracle", "decomposed")

# Constant learning rates used when the config leaves the rate unset.
DEFAULT_LEARNING_RATE = {LINEAR: 0.1, MLP: 0.05}


@dataclass
class TrainConfig:
    """Hyperparameters of one training run."""

    epochs: int = 500
    batch_size: int = 256
    learning_rate: float | None = None  # None: architecture default
    momentum: float = 0.9
    l2: float = 1e-4
    loss: str = losses.CROSS_ENTROPY
    strategy: Strategy = field(default_factory=lambda: Strategy("progressive"))
    seed: int = 0
    mode: str = "pll"
    checkpoint_every: int = 0  # 0 disables periodic checkpoints

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.checkpoint_every < 0:
            raise ConfigError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.l2 < 0:
            raise ConfigError(f"l2 must be >= 0, got {self.l2}")
        if self.loss not in losses.LOSS_KINDS:
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")


@dataclass
class EpochRecord:
    epoch: int
    risk: float
    test_acc: float
    transductive_acc: float
    seconds: float


@dataclass
class MetricsLog:
    """One record per completed epoch."""

    records: list[EpochRecord] = field(default_factory=list)

    def risks(self) -> np.ndarray:
        return np.array([r.risk for r in self.records])

    def test_accs(self) -> np.ndarray:
        return np.array([r.test_acc for r in self.records])

    def transductive_accs(self) -> np.ndarray:
        return np.array([r.transductive_acc for r in self.records])

    def last_window_test_acc(self, window: int = 10) -> float:
        """Mean test accuracy over the final `window` epochs."""
        accs = self.test_accs()
        return float(accs[-window:].mean())

    def write_csv(self, path) -> None:
        """Write the deterministic metric columns.

        Wall-clock stays out of this file on purpose: reruns of the same
        config must produce byte-identical metrics. Timing goes to
        :meth:`write_timing_csv`.
        """
        with open(path, "w") as f:
            f.write("epoch,risk,test_acc,transductive_acc\n")
            for r in self.records:
                f.write(f"{r.epoch},{r.risk!r},{r.test_acc!r},{r.transductive_acc!r}\n")

    def write_timing_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("epoch,seconds\n")
            for r in self.records:
                f.write(f"{r.epoch},{r.seconds:.6f}\n")


@dataclass
class TrainResult:
    params: ModelParams
    weights: WeightMatrix
    log: MetricsLog


def singleton_partial(data: SupervisedDataset) -> PartialDataset:
    """Wrap supervised data as candidate sets of size one."""
    candidates = np.zeros((data.n, data.class_count), dtype=bool)
    candidates[np.arange(data.n), data.labels] = True
    return PartialDataset(
        data.features.copy(), candidates, data.class_count, hidden_truth=data.labels.copy()
    )


def decompose_partial(data: PartialDataset) -> PartialDataset:
    """Expand each (x, S) into |S| singleton-labeled copies of x.

    The expanded dataset carries no hidden truth: a copy labeled with a wrong
    candidate has no meaningful true label.
    """
    rows, cols = np.nonzero(data.candidates)
    candidates = np.zeros((rows.shape[0], data.class_count), dtype=bool)
    candidates[np.arange(rows.shape[0]), cols] = True
    return PartialDataset(data.features[rows], candidates, data.class_count)


def empirical_risk(
    params: ModelParams, weights: WeightMatrix, data: PartialDataset, kind: str
) -> float:
    """Confidence-weighted empirical risk over the whole dataset."""
    probs = forward(params, data.features).probs
    row_losses = losses.weighted_loss_rows(probs, data.candidates, weights.rows, kind)
    return float(row_losses.mean())


def _resolve_train_data(config: TrainConfig, train_data: PartialDataset) -> PartialDataset:
    if config.mode == "oracle":
        if train_data.hidden_truth is None:
            raise MissingTruthError("oracle mode needs hidden_truth on the training data")
        sup = SupervisedDataset(
            train_data.features, train_data.hidden_truth, train_data.class_count
        )
        return singleton_partial(sup)
    if config.mode == "decomposed":
        return decompose_partial(train_data)
    return train_data


def train(
    config: TrainConfig,
    train_data: PartialDataset,
    test_data: SupervisedDataset | None = None,
    arch: str = LINEAR,
    hidden=None,
    checkpoint_dir=None,
) -> TrainResult:
    """Run the full training loop and log per-epoch metrics.

    Per epoch: shuffle into batches; per batch: forward, weighted loss with
    the current weights, gradient (plus l2 on the weight matrices), weight
    update from the same forward pass, then the momentum step
    v <- momentum*v - lr*grad; theta <- theta + v. Aborts with
    DivergenceError when a batch loss goes non-finite or the epoch risk
    exceeds RISK_CEILING.

    With ``checkpoint_dir`` set and config.checkpoint_every = k > 0, writes
    checkpoint_epoch{N}.npz (parameters plus the confidence matrix) after
    every k-th epoch; the run stays resumable and rerun-identical.
    """
    data = _resolve_train_data(config, train_data)
    if test_data is not None:
        if test_data.feature_dim != data.feature_dim:
            raise ConfigError("train/test feature dimensions disagree")
        if test_data.class_count != data.class_count:
            raise ConfigError("train/test class counts disagree")
    lr = config.learning_rate
    if lr is None:
        lr = DEFAULT_LEARNING_RATE[arch]

    params = init_params(arch, data.feature_dim, data.class_count, config.seed, hidden=hidden)
    velocity_w = [np.zeros_like(w) for w in params.weights]
    velocity_b = [np.zeros_like(b) for b in params.biases]
    weights = init_uniform(data.candidates)
    shuffle_rng = stream(config.seed, "shuffle")
    kind = config.loss
    log = MetricsLog()

    for epoch in range(1, config.epochs + 1):
        tick = time.perf_counter()
        batches = split_minibatches(data.n, config.batch_size, shuffle_rng)
        for k, idx in enumerate(batches):
            trace = forward(params, data.features[idx])
            cand = data.candidates[idx]
            w_rows = weights.rows[idx]
            batch_loss = losses.weighted_loss_rows(trace.probs, cand, w_rows, kind).mean()
            if not np.isfinite(batch_loss):
                raise DivergenceError(
                    f"non-finite batch loss at epoch {epoch}, batch {k}", epoch=epoch, batch=k
                )
            grad_probs = losses.weighted_loss_grad_rows(trace.probs, cand, w_rows, kind)
            grads = backward(params, trace, grad_probs / idx.shape[0], l2=config.l2)
            apply_strategy(config.strategy, epoch, BATCH_PHASE, weights, idx, trace.probs)
            for l in range(len(params.weights)):
                velocity_w[l] = config.momentum * velocity_w[l] - lr * grads.weights[l]
                velocity_b[l] = config.momentum * velocity_b[l] - lr * grads.biases[l]
                params.weights[l] += velocity_w[l]
                params.biases[l] += velocity_b[l]

        if config.strategy.kind == "itera" and epoch % config.strategy.period == 0:
            all_probs = forward(params, data.features).probs
            apply_strategy(
                config.strategy, epoch, EPOCH_END_PHASE, weights, np.arange(data.n), all_probs
            )

        risk = empirical_risk(params, weights, data, kind)
        if not np.isfinite(risk) or risk > RISK_CEILING:
            raise DivergenceError(f"risk {risk!r} diverged at epoch {epoch}", epoch=epoch)
        acc = test_accuracy(params, test_data) if test_data is not None else float("nan")
        if data.hidden_truth is not None:
            trans = transductive_accuracy(weights.rows, data.hidden_truth)
        else:
            trans = float("nan")
        log.records.append(EpochRecord(epoch, risk, acc, trans, time.perf_counter() - tick))
        if (
            checkpoint_dir is not None
            and config.checkpoint_every
            and epoch % config.checkpoint_every == 0
        ):
            save_checkpoint(
                Path(checkpoint_dir) / f"checkpoint_epoch{epoch}.npz",
                params,
                weight_rows=weights.rows,
                candidates=weights.candidates,
            )
    return TrainResult(params, weights, log)


def train_pn_oracle(
    config: TrainConfig,
    data: SupervisedDataset,
    test_data: SupervisedDataset | None = None,
    arch: str = LINEAR,
    hidden=None,
) -> TrainResult:
    """Supervised reference run on ordinary labels (same optimizer)."""
    return train(
        replace(config, mode="pll"), singleton_partial(data), test_data, arch=arch, hidden=hidden
    )


def train_pn_decomp(
    config: TrainConfig,
    data: PartialDataset,
    test_data: SupervisedDataset | None = None,
    arch: str = LINEAR,
    hidden=None,
) -> TrainResult:
    """Baseline that treats every candidate as an ordinary labeled example."""
    return train(
        replace(config, mode="decomposed"), data, test_data, arch=arch, hidden=hidden
    )
