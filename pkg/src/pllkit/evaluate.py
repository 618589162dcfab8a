"""Accuracy metrics and cross-seed summaries.

All argmax-style decisions break ties toward the smallest label index, which
keeps every reported number reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SupervisedDataset
from .errors import DomainError, MissingTruthError
from .network import ModelParams, forward


@dataclass
class EvalReport:
    """Inductive and transductive accuracy plus the test confusion counts."""

    test_accuracy: float
    transductive_accuracy: float  # NaN when no hidden truth was available
    confusion: np.ndarray  # (c, c) int64, rows = true class, cols = predicted

    def summary_block(self) -> str:
        lines = [
            f"test accuracy:         {self.test_accuracy:.4f}",
            f"transductive accuracy: {self.transductive_accuracy:.4f}",
            f"per-class test counts: {self.confusion.sum(axis=1).tolist()}",
        ]
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("metric,value\n")
            f.write(f"test_accuracy,{self.test_accuracy!r}\n")
            f.write(f"transductive_accuracy,{self.transductive_accuracy!r}\n")
            for i, row in enumerate(self.confusion):
                f.write(f"confusion_row_{i},{' '.join(str(v) for v in row)}\n")


def predict(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Predicted labels: argmax of the model probabilities per row."""
    return forward(params, features).probs.argmax(axis=1)


def confusion_matrix(params: ModelParams, data: SupervisedDataset) -> np.ndarray:
    """(c, c) counts with true classes on rows, predictions on columns."""
    pred = predict(params, data.features)
    c = data.class_count
    counts = np.zeros((c, c), dtype=np.int64)
    np.add.at(counts, (data.labels, pred), 1)
    return counts


def test_accuracy(params: ModelParams, test_data: SupervisedDataset) -> float:
    """Fraction of test instances whose predicted label matches the truth."""
    if test_data.n == 0:
        raise DomainError("empty test set")
    pred = predict(params, test_data.features)
    return float((pred == test_data.labels).mean())


def transductive_accuracy(weight_rows: np.ndarray, hidden_truth) -> float:
    """Fraction of training rows whose weight argmax hits the true label.

    This scores the disambiguation output itself. For the model-prediction
    reading of the same quantity see
    :func:`transductive_accuracy_from_model`.
    """
    if hidden_truth is None:
        raise MissingTruthError("transductive accuracy needs hidden truth labels")
    weight_rows = np.asarray(weight_rows, dtype=np.float64)
    identified = weight_rows.argmax(axis=1)
    return float((identified == np.asarray(hidden_truth)).mean())


def transductive_accuracy_from_model(
    params: ModelParams, features: np.ndarray, hidden_truth
) -> float:
    """Alternative transductive reading: model argmax over all labels."""
    if hidden_truth is None:
        raise MissingTruthError("transductive accuracy needs hidden truth labels")
    pred = predict(params, features)
    return float((pred == np.asarray(hidden_truth)).mean())


def evaluate_model(
    params: ModelParams,
    test_data: SupervisedDataset,
    weight_rows: np.ndarray | None = None,
    hidden_truth=None,
) -> EvalReport:
    """Bundle test accuracy, optional transductive accuracy, and confusion."""
    trans = float("nan")
    if weight_rows is not None and hidden_truth is not None:
        trans = transductive_accuracy(weight_rows, hidden_truth)
    return EvalReport(
        test_accuracy=test_accuracy(params, test_data),
        transductive_accuracy=trans,
        confusion=confusion_matrix(params, test_data),
    )


def summarize_seeds(logs: list, window: int = 10) -> dict[str, tuple[float, float]]:
    """Cross-seed (mean, sample std) of the last-`window`-epoch averages.

    Covers test accuracy, transductive accuracy, and risk; std uses the n-1
    denominator.
    """
    if len(logs) < 2:
        raise DomainError("need at least 2 runs to summarize")
    out = {}
    for name, pull in (
        ("test_acc", lambda lg: lg.test_accs()),
        ("transductive_acc", lambda lg: lg.transductive_accs()),
        ("risk", lambda lg: lg.risks()),
    ):
        # Sorting fixes the floating-point summation order, so the summary is
        # exactly permutation-invariant in the run list.
        vals = np.sort([float(pull(lg)[-window:].mean()) for lg in logs])
        out[name] = (float(vals.mean()), float(vals.std(ddof=1)))
    return out
