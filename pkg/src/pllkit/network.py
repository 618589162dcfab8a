"""Dense softmax classifiers with hand-rolled forward and backward passes.

Two architectures: a single affine layer ("linear") and a fully connected
ReLU network ("mlp", default hidden widths 300-300-300-300). Everything runs
in float64; the backward pass is plain reverse accumulation through softmax
and the affine/ReLU stack, verifiable against central finite differences via
:func:`grad_check`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, DomainError, NumericError
from .rng import stream

LINEAR = "linear"
MLP = "mlp"
DEFAULT_HIDDEN = (300, 300, 300, 300)


@dataclass
class ModelParams:
    """Layer weights/biases; weights[l] has shape (out, in)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    arch: str

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases], self.arch
        )


@dataclass
class Gradients:
    """Same shapes as ModelParams; holds d(objective)/d(parameter)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class ForwardTrace:
    """Intermediates kept by :func:`forward` for the backward pass."""

    activations: list[np.ndarray]  # activations[0] is the input batch
    pre_activations: list[np.ndarray]  # one per layer
    probs: np.ndarray  # (m, c) softmax rows


def init_params(arch: str, d: int, c: int, seed: int, hidden=None) -> ModelParams:
    """Seeded fan-in-scaled uniform init, biases zero.

    linear: a single d -> c layer. mlp: d -> hidden... -> c with ReLU between
    layers. Weights are uniform in [-sqrt(6/fan_in), +sqrt(6/fan_in)].
    """
    if d < 1 or c < 1:
        raise DomainError("need d >= 1 and c >= 1")
    if arch == LINEAR:
        sizes = [d, c]
    elif arch == MLP:
        hidden = DEFAULT_HIDDEN if hidden is None else tuple(hidden)
        sizes = [d, *hidden, c]
    else:
        raise DomainError(f"unknown architecture {arch!r}")
    rng = stream(seed, "init")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases, arch)


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(params: ModelParams, batch: np.ndarray) -> ForwardTrace:
    """Evaluate the network on a batch, keeping intermediates.

    Hidden layers use ReLU; the final pre-activation goes through softmax.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != params.input_dim:
        raise DomainError(
            f"batch shape {batch.shape} incompatible with input dim {params.input_dim}"
        )
    activations = [batch]
    pre_activations = []
    a = batch
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        pre_activations.append(z)
        if l < last:
            a = np.maximum(z, 0.0)
            activations.append(a)
    return ForwardTrace(activations, pre_activations, softmax(pre_activations[-1]))


def backward(
    params: ModelParams,
    trace: ForwardTrace,
    loss_grad_on_probs: np.ndarray,
    l2: float = 0.0,
) -> Gradients:
    """Reverse accumulation of d(L + (l2/2)*||weights||^2)/d(parameters).

    ``loss_grad_on_probs`` is dL/d(softmax output), shape (m, c); whatever
    batch averaging L uses must already be baked into it. Biases are excluded
    from the l2 term. ReLU takes subgradient 0 at exactly 0.
    """
    g = np.asarray(loss_grad_on_probs, dtype=np.float64)
    if g.shape != trace.probs.shape:
        raise DomainError(f"loss gradient shape {g.shape} != probs shape {trace.probs.shape}")
    if len(trace.pre_activations) != len(params.weights):
        raise DomainError("trace does not match the parameter stack")

    p = trace.probs
    dz = p * (g - (g * p).sum(axis=1, keepdims=True))

    grad_w = [np.empty_like(w) for w in params.weights]
    grad_b = [np.empty_like(b) for b in params.biases]
    for l in range(len(params.weights) - 1, -1, -1):
        a_prev = trace.activations[l]
        grad_w[l] = dz.T @ a_prev
        if l2:
            grad_w[l] += l2 * params.weights[l]
        grad_b[l] = dz.sum(axis=0)
        if l > 0:
            da = dz @ params.weights[l]
            dz = da * (trace.pre_activations[l - 1] > 0.0)
    return Gradients(grad_w, grad_b)


def _param_tensors(params: ModelParams) -> list[np.ndarray]:
    return list(params.weights) + list(params.biases)


def grad_check(
    params: ModelParams,
    batch: np.ndarray,
    loss_value,
    loss_grad,
    epsilon: float = 1e-5,
    sample: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_value(probs) -> float`` and ``loss_grad(probs) -> (m, c)`` define
    the objective on the softmax outputs (no l2 term; that part of backward
    is linear and exact). Every parameter coordinate is perturbed by
    +/- epsilon unless ``sample`` limits the sweep to that many seeded-random
    coordinates. Relative error uses |a - n| / max(|a|, |n|, 1e-8).
    """
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    trace = forward(params, batch)
    base = float(loss_value(trace.probs))
    if not np.isfinite(base):
        raise NumericError("loss is not finite at the unperturbed parameters")
    analytic = backward(params, trace, loss_grad(trace.probs), l2=0.0)
    analytic_tensors = list(analytic.weights) + list(analytic.biases)

    tensors = _param_tensors(params)
    coords = [(t, i) for t, tensor in enumerate(tensors) for i in range(tensor.size)]
    if sample is not None and sample < len(coords):
        rng = stream(seed, "test")
        chosen = rng.choice(len(coords), size=sample, replace=False)
        coords = [coords[int(k)] for k in chosen]

    worst = 0.0
    for t, i in coords:
        flat = tensors[t].reshape(-1)
        original = flat[i]
        flat[i] = original + epsilon
        f_plus = float(loss_value(forward(params, batch).probs))
        flat[i] = original - epsilon
        f_minus = float(loss_value(forward(params, batch).probs))
        flat[i] = original
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError("loss is not finite at a perturbed parameter")
        numeric = (f_plus - f_minus) / (2.0 * epsilon)
        a = analytic_tensors[t].reshape(-1)[i]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


_CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: ModelParams, weight_rows=None, candidates=None) -> None:
    """Write parameters (and optionally the label-confidence matrix) to npz.

    Arrays are stored as float64 exactly as held in memory, so a round-trip
    is bit-identical.
    """
    payload = {
        "format_version": np.int64(_CHECKPOINT_VERSION),
        "arch": np.str_(params.arch),
        "layer_count": np.int64(len(params.weights)),
        "has_weight_matrix": np.bool_(weight_rows is not None),
    }
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        payload[f"w{l}"] = w
        payload[f"b{l}"] = b
    if weight_rows is not None:
        payload["weight_rows"] = weight_rows
        payload["weight_candidates_packed"] = np.packbits(candidates, axis=1)
        payload["weight_class_count"] = np.int64(candidates.shape[1])
    np.savez(path, **payload)


def load_checkpoint(path):
    """Read a checkpoint; returns (ModelParams, weight_rows, candidates).

    The last two are None when the checkpoint holds no confidence matrix.
    """
    with np.load(path, allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != _CHECKPOINT_VERSION:
            raise DataFormatError(f"{path}: checkpoint version {version}, expected {_CHECKPOINT_VERSION}")
        count = int(z["layer_count"])
        weights = [z[f"w{l}"] for l in range(count)]
        biases = [z[f"b{l}"] for l in range(count)]
        params = ModelParams(weights, biases, str(z["arch"]))
        weight_rows = candidates = None
        if bool(z["has_weight_matrix"]):
            weight_rows = z["weight_rows"]
            c = int(z["weight_class_count"])
            candidates = np.unpackbits(z["weight_candidates_packed"], axis=1)[:, :c].astype(bool)
        return params, weight_rows, candidates
