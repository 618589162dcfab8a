"""Per-label losses and the candidate-set objectives built from them.

Two decomposable base losses are supported, cross-entropy ("ce") and mean
squared error ("mse"); both split into per-coordinate terms against a one-hot
(or multi-hot) target, which is what makes the weighted relaxation below
well-defined.

Candidate sets are boolean masks of shape (c,) for the scalar operations and
(m, c) for the batch row operations used by the trainer.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, SupportError

CROSS_ENTROPY = "ce"
MEAN_SQUARED_ERROR = "mse"
LOSS_KINDS = (CROSS_ENTROPY, MEAN_SQUARED_ERROR)

# Floor for log arguments; keeps cross-entropy finite when softmax underflows.
LOG_FLOOR = 1e-12

# Row weights must sum to 1 and stay on the candidate support within this.
WEIGHT_TOL = 1e-9


def _check_kind(kind: str) -> None:
    if kind not in LOSS_KINDS:
        raise DomainError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")


def _check_candidates(candidates: np.ndarray, c: int) -> np.ndarray:
    candidates = np.asarray(candidates, dtype=bool)
    if candidates.shape != (c,):
        raise DomainError(f"candidate mask must have shape ({c},)")
    if not candidates.any():
        raise DomainError("candidate set must be non-empty")
    return candidates


def safe_log(x: np.ndarray) -> np.ndarray:
    """log with its argument clamped at LOG_FLOOR."""
    return np.log(np.maximum(x, LOG_FLOOR))


def ordinary_loss(probs: np.ndarray, target: int, kind: str) -> float:
    """Loss of a probability vector against the one-hot target class.

    ce:  -sum_i e_i log g_i  (log clamped at LOG_FLOOR)
    mse:  sum_i (g_i - e_i)^2
    """
    _check_kind(kind)
    probs = np.asarray(probs, dtype=np.float64)
    c = probs.shape[0]
    if not 0 <= target < c:
        raise DomainError(f"target {target} outside [0, {c})")
    if kind == CROSS_ENTROPY:
        return float(-safe_log(probs[target]))
    e = np.zeros(c)
    e[target] = 1.0
    return float(((probs - e) ** 2).sum())


def cross_entropy_soft(probs: np.ndarray, target_vec: np.ndarray) -> float:
    """Cross-entropy against an arbitrary (soft) target vector."""
    probs = np.asarray(probs, dtype=np.float64)
    target_vec = np.asarray(target_vec, dtype=np.float64)
    if probs.shape != target_vec.shape:
        raise DomainError("probs and target must have matching shape")
    return float(-(target_vec * safe_log(probs)).sum())


def pll_min_loss(probs: np.ndarray, candidates: np.ndarray, kind: str) -> float:
    """Smallest per-candidate ordinary loss: min over i in S of loss(g, e^i)."""
    probs = np.asarray(probs, dtype=np.float64)
    candidates = _check_candidates(candidates, probs.shape[0])
    return min(ordinary_loss(probs, i, kind) for i in np.where(candidates)[0])


def best_guess(probs: np.ndarray, candidates: np.ndarray, kind: str) -> int:
    """Candidate label with the smallest ordinary loss, ties to the smallest index."""
    probs = np.asarray(probs, dtype=np.float64)
    candidates = _check_candidates(candidates, probs.shape[0])
    members = np.where(candidates)[0]
    losses = np.array([ordinary_loss(probs, i, kind) for i in members])
    return int(members[np.argmin(losses)])


def _check_weights(weights: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != candidates.shape:
        raise DomainError("weights must match the candidate mask shape")
    off_support = float(np.abs(weights[~candidates]).sum())
    if off_support > WEIGHT_TOL:
        raise SupportError(f"weight mass {off_support:g} outside the candidate set")
    total = float(weights.sum())
    if abs(total - 1.0) > WEIGHT_TOL:
        raise SupportError(f"weights sum to {total!r}, expected 1")
    return weights


def weighted_loss(
    probs: np.ndarray, candidates: np.ndarray, weights: np.ndarray, kind: str
) -> float:
    """Confidence-weighted decomposed loss sum_j w_j * loss(g_j, e_j^S).

    e^S is the multi-hot vector of the candidate set, so each on-support
    coordinate is scored against target 1. Off-support coordinates carry zero
    weight by contract.
    """
    _check_kind(kind)
    probs = np.asarray(probs, dtype=np.float64)
    candidates = _check_candidates(candidates, probs.shape[0])
    weights = _check_weights(weights, candidates)
    multi_hot = candidates.astype(np.float64)
    if kind == CROSS_ENTROPY:
        per_coord = -multi_hot * safe_log(probs)
    else:
        per_coord = (probs - multi_hot) ** 2
    return float((weights * per_coord).sum())


def weighted_loss_grad_on_probs(
    probs: np.ndarray, candidates: np.ndarray, weights: np.ndarray, kind: str
) -> np.ndarray:
    """Gradient of :func:`weighted_loss` with respect to the probability vector.

    ce:  -w_j / max(g_j, LOG_FLOOR) on support, 0 elsewhere
    mse:  2 w_j (g_j - e_j^S) per coordinate
    """
    _check_kind(kind)
    probs = np.asarray(probs, dtype=np.float64)
    candidates = _check_candidates(candidates, probs.shape[0])
    weights = _check_weights(weights, candidates)
    if kind == CROSS_ENTROPY:
        grad = np.where(candidates, -weights / np.maximum(probs, LOG_FLOOR), 0.0)
    else:
        grad = 2.0 * weights * (probs - candidates.astype(np.float64))
    return grad


def weighted_loss_rows(
    probs: np.ndarray, candidates: np.ndarray, weights: np.ndarray, kind: str
) -> np.ndarray:
    """Per-row weighted loss for a whole batch; no support re-validation.

    The trainer maintains the row invariants itself (weights are produced by
    the weighting module), so this skips the scalar path's checks.
    """
    _check_kind(kind)
    multi_hot = candidates.astype(np.float64)
    if kind == CROSS_ENTROPY:
        per_coord = -multi_hot * safe_log(probs)
    else:
        per_coord = (probs - multi_hot) ** 2
    return (weights * per_coord).sum(axis=1)


def weighted_loss_grad_rows(
    probs: np.ndarray, candidates: np.ndarray, weights: np.ndarray, kind: str
) -> np.ndarray:
    """Per-row gradient on probabilities for a whole batch."""
    _check_kind(kind)
    if kind == CROSS_ENTROPY:
        return np.where(candidates, -weights / np.maximum(probs, LOG_FLOOR), 0.0)
    return 2.0 * weights * (probs - candidates.astype(np.float64))
