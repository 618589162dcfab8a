"""Label-confidence weights over candidate sets and their update strategies.

The weight matrix holds one distribution per training instance, supported on
that instance's candidate set. Strategies differ in how (and when) the
current model probabilities reshape the rows:

- progressive: renormalize the candidate-restricted probabilities each batch
- sudden: snap to a one-hot at the candidate argmax each batch
- naive: never move off the uniform initialization
- itera: progressive-style refresh of all rows, but only at the end of every
  period-th epoch and from full-dataset predictions
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

# Candidate probability mass below this is treated as zero; the row falls
# back to the uniform distribution over its candidate set.
MASS_FLOOR = 1e-12

STRATEGY_KINDS = ("progressive", "sudden", "naive", "itera")

BATCH_PHASE = "batch"
EPOCH_END_PHASE = "epoch_end"


@dataclass
class Strategy:
    """Which update rule runs, and for "itera" its epoch cadence."""

    kind: str
    period: int = 100

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise DomainError(f"unknown strategy {self.kind!r}; expected one of {STRATEGY_KINDS}")
        if self.kind == "itera" and self.period < 1:
            raise DomainError(f"itera period must be >= 1, got {self.period}")

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        """Parse "progressive", "sudden", "naive", or "itera:<period>"."""
        if text.startswith("itera"):
            _, _, raw = text.partition(":")
            return cls("itera", int(raw) if raw else 100)
        return cls(text)

    def label(self) -> str:
        return f"itera:{self.period}" if self.kind == "itera" else self.kind


@dataclass
class WeightMatrix:
    """Row-stochastic confidence weights mirrored on the candidate masks."""

    rows: np.ndarray  # (n, c) float64
    candidates: np.ndarray  # (n, c) bool

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    def copy(self) -> "WeightMatrix":
        return WeightMatrix(self.rows.copy(), self.candidates)


def init_uniform(candidates: np.ndarray) -> WeightMatrix:
    """Uniform weights 1/|S_i| on each candidate set, 0 elsewhere."""
    candidates = np.asarray(candidates, dtype=bool)
    sizes = candidates.sum(axis=1)
    if sizes.size and sizes.min() < 1:
        raise DomainError("every candidate set must be non-empty")
    rows = candidates / np.maximum(sizes, 1)[:, None]
    return WeightMatrix(rows, candidates)


def _uniform_rows(mask: np.ndarray) -> np.ndarray:
    return mask / mask.sum(axis=1, keepdims=True)


def _check_batch(weights: WeightMatrix, batch_indices, batch_probs) -> tuple:
    idx = np.asarray(batch_indices, dtype=np.int64)
    probs = np.asarray(batch_probs, dtype=np.float64)
    if idx.size and (idx.min() < 0 or idx.max() >= weights.n):
        raise DomainError("batch index out of range")
    if probs.shape != (idx.shape[0], weights.rows.shape[1]):
        raise DomainError("batch_probs shape must be (len(batch_indices), c)")
    return idx, probs


def update_progressive(weights: WeightMatrix, batch_indices, batch_probs) -> np.ndarray:
    """Renormalize model probabilities over each row's candidate set.

    w_ij <- g_j(x_i) / sum_{k in S_i} g_k(x_i) on support, 0 off support.
    Rows whose candidate probability mass is numerically zero revert to the
    uniform initialization. Returns the updated rows; other rows untouched.
    """
    idx, probs = _check_batch(weights, batch_indices, batch_probs)
    mask = weights.candidates[idx]
    masked = np.where(mask, probs, 0.0)
    mass = masked.sum(axis=1, keepdims=True)
    degenerate = mass[:, 0] < MASS_FLOOR
    updated = np.where(degenerate[:, None], _uniform_rows(mask), masked / np.where(mass < MASS_FLOOR, 1.0, mass))
    weights.rows[idx] = updated
    return updated


def update_sudden(weights: WeightMatrix, batch_indices, batch_probs) -> np.ndarray:
    """One-hot each row at its candidate argmax, ties to the smallest index."""
    idx, probs = _check_batch(weights, batch_indices, batch_probs)
    mask = weights.candidates[idx]
    scores = np.where(mask, probs, -np.inf)
    winners = scores.argmax(axis=1)
    updated = np.zeros_like(probs)
    updated[np.arange(idx.shape[0]), winners] = 1.0
    weights.rows[idx] = updated
    return updated


def apply_strategy(
    strategy: Strategy,
    epoch: int,
    phase: str,
    weights: WeightMatrix,
    batch_indices,
    batch_probs,
) -> WeightMatrix:
    """Run the strategy's update for this phase, if it has one.

    ``phase`` is "batch" (after each mini-batch gradient, probabilities from
    that batch's forward pass) or "epoch_end" (full-dataset probabilities,
    all row indices). Progressive and sudden act per batch; naive never acts;
    itera acts only at epoch_end of every period-th epoch (1-based epochs).
    """
    if phase not in (BATCH_PHASE, EPOCH_END_PHASE):
        raise DomainError(f"unknown phase {phase!r}")
    if phase == BATCH_PHASE:
        if strategy.kind == "progressive":
            update_progressive(weights, batch_indices, batch_probs)
        elif strategy.kind == "sudden":
            update_sudden(weights, batch_indices, batch_probs)
    elif strategy.kind == "itera" and epoch % strategy.period == 0:
        update_progressive(weights, batch_indices, batch_probs)
    return weights
