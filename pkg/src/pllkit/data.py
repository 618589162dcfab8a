"""Datasets for partial-label experiments.

Covers loading ordinary supervised data (CSV, IDX), feature normalization,
corrupting true labels into candidate label sets, the empirical ambiguity
degree, mini-batch index splitting, and a versioned on-disk container for
corrupted datasets.

Candidate sets are stored as an (n, c) boolean mask, one row per instance:
``candidates[i, j]`` answers "is label j a candidate for instance i" in O(1),
and whole-column statistics vectorize naturally. Rows are never empty and
never the full label set.
"""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConsistencyError,
    DataFormatError,
    DomainError,
    InsufficientDataError,
    MissingTruthError,
)
from .rng import as_generator, stream

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

# Relative tolerance below which a feature column counts as constant.
_ZERO_VARIANCE_RTOL = 1e-12


@dataclass
class SupervisedDataset:
    """Ordinarily labeled data: features plus one true label per instance."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64, values in [0, class_count)
    class_count: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DomainError(f"features must be 2-d, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise DomainError("labels must be a vector with one entry per feature row")
        if self.class_count <= 2:
            raise DomainError(f"need a multi-class problem (c > 2), got c={self.class_count}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DomainError("label index outside [0, class_count)")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass
class FlipSpec:
    """How to corrupt true labels into candidate sets."""

    kind: str  # "binomial" or "pair"
    q: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("binomial", "pair"):
            raise DomainError(f"unknown flip kind {self.kind!r}")
        if not (0.0 <= self.q < 1.0):
            raise DomainError(f"flip probability must lie in [0, 1), got {self.q}")


@dataclass
class PartialDataset:
    """Partially labeled data: each instance carries a candidate label set.

    ``hidden_truth`` keeps the pre-corruption labels for evaluation only; the
    training path never reads it.
    """

    features: np.ndarray  # (n, d) float64
    candidates: np.ndarray  # (n, c) bool
    class_count: int
    hidden_truth: np.ndarray | None = None  # (n,) int64
    flip_spec: FlipSpec | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.candidates = np.asarray(self.candidates, dtype=bool)
        n = self.features.shape[0]
        if self.candidates.shape != (n, self.class_count):
            raise DomainError("candidate mask must have shape (n, class_count)")
        sizes = self.candidates.sum(axis=1)
        if sizes.size and sizes.min() < 1:
            raise DomainError("every candidate set must be non-empty")
        if sizes.size and sizes.max() >= self.class_count:
            raise DomainError("candidate set must never be the full label set")
        if self.hidden_truth is not None:
            self.hidden_truth = np.asarray(self.hidden_truth, dtype=np.int64)
            if self.hidden_truth.shape != (n,):
                raise DomainError("hidden_truth must have one entry per instance")
            if not self.candidates[np.arange(n), self.hidden_truth].all():
                raise DomainError("hidden true label missing from its candidate set")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def set_sizes(self) -> np.ndarray:
        """|S_i| for every instance."""
        return self.candidates.sum(axis=1)


def load_csv(path, label_column: int = -1, skip_header: bool = False) -> SupervisedDataset:
    """Load a dense CSV of real features plus one integer label column.

    No header by default (``skip_header`` drops one row). The label column may
    be given as a negative index. Class count is inferred as max label + 1.
    """
    path = Path(path)
    rows: list[list[str]] = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        for row in reader:
            if row:
                rows.append(row)
    if skip_header and rows:
        rows = rows[1:]
    if not rows:
        raise DataFormatError(f"{path}: no data rows")

    arity = len(rows[0])
    if arity < 2:
        raise DataFormatError(f"{path}: need at least one feature and one label column")
    col = label_column if label_column >= 0 else arity + label_column
    if not 0 <= col < arity:
        raise DomainError(f"label column {label_column} out of range for {arity} columns")

    offset = 2 if skip_header else 1
    features = np.empty((len(rows), arity - 1), dtype=np.float64)
    labels = np.empty(len(rows), dtype=np.int64)
    for i, row in enumerate(rows):
        if len(row) != arity:
            raise DataFormatError(
                f"{path}: row {i + offset}: expected {arity} fields, got {len(row)}"
            )
        raw_label = row[col].strip()
        try:
            labels[i] = int(raw_label)
        except ValueError:
            raise DataFormatError(
                f"{path}: row {i + offset}: label {raw_label!r} is not an integer"
            ) from None
        feats = row[:col] + row[col + 1 :]
        try:
            features[i] = [float(v) for v in feats]
        except ValueError:
            raise DataFormatError(f"{path}: row {i + offset}: non-numeric feature") from None

    if labels.min() < 0:
        raise DataFormatError(f"{path}: negative label {labels.min()}")
    return SupervisedDataset(features, labels, class_count=int(labels.max()) + 1)


def _read_idx(path, expected_magic: int, expected_ndim: int) -> np.ndarray:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4:
        raise DataFormatError(f"{path}: too short for an IDX header")
    (magic,) = struct.unpack(">i", raw[:4])
    if magic != expected_magic:
        raise DataFormatError(
            f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    ndim = magic & 0xFF
    if ndim != expected_ndim:
        raise DataFormatError(f"{path}: {ndim} dimensions, expected {expected_ndim}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated IDX dimension header")
    dims = struct.unpack(f">{ndim}i", raw[4:header])
    count = int(np.prod(dims))
    if len(raw) - header != count:
        raise DataFormatError(
            f"{path}: payload holds {len(raw) - header} bytes, header promises {count}"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path) -> SupervisedDataset:
    """Load an IDX3/IDX1 image-label pair (optionally gzip-compressed).

    Pixels are flattened row-major to d = rows*cols features scaled to [0, 1].
    """
    images = _read_idx(images_path, IDX_IMAGE_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABEL_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    n = images.shape[0]
    features = images.reshape(n, -1).astype(np.float64) / 255.0
    return SupervisedDataset(features, labels.astype(np.int64), class_count=int(labels.max()) + 1)


def zscore_normalize(data: SupervisedDataset) -> SupervisedDataset:
    """Normalize each feature column to mean 0 and (population) std 1.

    Columns whose spread is zero relative to their magnitude come out as
    all-zeros instead of dividing by ~0. Idempotent up to round-off.
    """
    if data.n < 2:
        raise InsufficientDataError(f"z-score needs n >= 2, got n={data.n}")
    mean = data.features.mean(axis=0)
    centered = data.features - mean
    std = np.sqrt((centered**2).mean(axis=0))
    constant = std <= _ZERO_VARIANCE_RTOL * np.maximum(1.0, np.abs(mean))
    scale = np.where(constant, 1.0, std)
    normalized = np.where(constant, 0.0, centered / scale)
    return SupervisedDataset(normalized, data.labels.copy(), data.class_count)


def binomial_flip_mask(
    labels: np.ndarray, class_count: int, q: float, rng: np.random.Generator
) -> np.ndarray:
    """Raw Bernoulli(q) draws for every negative label, before any adjustment.

    Returns an (n, c) bool mask that is False on every true-label position.
    Exposed separately so the pre-adjustment flip statistics can be audited.
    """
    n = labels.shape[0]
    mask = rng.random((n, class_count)) < q
    mask[np.arange(n), labels] = False
    return mask


def _random_negatives(rows_labels: np.ndarray, class_count: int, rng) -> np.ndarray:
    """One uniformly random label != the given label, per row."""
    r = rng.integers(0, class_count - 1, size=rows_labels.shape[0])
    return np.where(r >= rows_labels, r + 1, r)


def corrupt_binomial(data: SupervisedDataset, spec: FlipSpec) -> PartialDataset:
    """Corrupt labels with independent per-negative flips of probability q.

    Each of the c-1 wrong labels joins the candidate set independently with
    probability q. Rows where nothing flipped get one uniformly random wrong
    label added, so |S| >= 2 everywhere; rows where everything flipped have
    one uniformly random flipped label removed, so S is never the full label
    set. Deterministic given ``spec.seed``.
    """
    if spec.kind != "binomial":
        raise DomainError(f"spec.kind must be 'binomial', got {spec.kind!r}")
    rng = stream(spec.seed, "corrupt")
    c = data.class_count
    flips = binomial_flip_mask(data.labels, c, spec.q, rng)

    flip_counts = flips.sum(axis=1)
    none_flipped = np.where(flip_counts == 0)[0]
    if none_flipped.size:
        add = _random_negatives(data.labels[none_flipped], c, rng)
        flips[none_flipped, add] = True
    all_flipped = np.where(flip_counts == c - 1)[0]
    if all_flipped.size:
        drop = _random_negatives(data.labels[all_flipped], c, rng)
        flips[all_flipped, drop] = False

    candidates = flips
    candidates[np.arange(data.n), data.labels] = True
    return PartialDataset(
        data.features.copy(), candidates, c, hidden_truth=data.labels.copy(), flip_spec=spec
    )


def corrupt_pair(data: SupervisedDataset, spec: FlipSpec) -> PartialDataset:
    """Corrupt labels by flipping only the cyclically next class.

    Each instance keeps {y} with probability 1-q and becomes {y, (y+1) mod c}
    with probability q. Singletons are allowed. Deterministic given
    ``spec.seed``.
    """
    if spec.kind != "pair":
        raise DomainError(f"spec.kind must be 'pair', got {spec.kind!r}")
    rng = stream(spec.seed, "corrupt")
    c = data.class_count
    n = data.n
    candidates = np.zeros((n, c), dtype=bool)
    candidates[np.arange(n), data.labels] = True
    flipped = rng.random(n) < spec.q
    partner = (data.labels + 1) % c
    candidates[np.where(flipped)[0], partner[flipped]] = True
    return PartialDataset(
        data.features.copy(), candidates, c, hidden_truth=data.labels.copy(), flip_spec=spec
    )


def estimate_ambiguity(data: PartialDataset) -> float:
    """Empirical ambiguity degree of a corrupted dataset.

    For every ordered label pair (y, y') with y' != y, measures how often y'
    sits in the candidate set of instances whose true label is y, and returns
    the maximum. Pairs whose class y has no instances are skipped.
    """
    if data.hidden_truth is None:
        raise MissingTruthError("ambiguity estimate needs hidden_truth")
    c = data.class_count
    worst = 0.0
    for y in range(c):
        rows = data.hidden_truth == y
        if not rows.any():
            continue
        freq = data.candidates[rows].mean(axis=0)
        freq[y] = 0.0
        worst = max(worst, float(freq.max()))
    return worst


def split_minibatches(n: int, batch_size: int, seed_or_rng) -> list[np.ndarray]:
    """Shuffle [0, n) and cut it into ceil(n / batch_size) contiguous chunks.

    The last chunk may be short. Accepts an int seed or a Generator so a
    training loop can draw successive epochs from one stream.
    """
    if batch_size < 1:
        raise DomainError(f"batch_size must be >= 1, got {batch_size}")
    rng = as_generator(seed_or_rng, "shuffle")
    perm = rng.permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


def stratified_split(
    data: SupervisedDataset, test_fraction: float, seed: int
) -> tuple[SupervisedDataset, SupervisedDataset]:
    """Split into train/test keeping per-class proportions.

    The test set gets n - floor((1 - test_fraction) * n) instances, allocated
    across classes by largest remainder; every class keeps at least one
    training instance. Deterministic given ``seed``.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DomainError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = data.n
    test_total = n - int(np.floor((1.0 - test_fraction) * n))
    class_counts = np.bincount(data.labels, minlength=data.class_count)

    quota = class_counts * test_fraction
    take = np.floor(quota).astype(np.int64)
    remainder = quota - take
    # Hand out the leftover seats by largest remainder, ties to the lower class
    # index; never take a class's last training instance.
    order = np.lexsort((np.arange(data.class_count), -remainder))
    deficit = test_total - int(take.sum())
    for y in order:
        if deficit <= 0:
            break
        if class_counts[y] - take[y] >= 2:
            take[y] += 1
            deficit -= 1

    rng = stream(seed, "split")
    test_rows = []
    for y in range(data.class_count):
        rows = np.where(data.labels == y)[0]
        if rows.size == 0:
            continue
        rng_perm = rng.permutation(rows.size)
        test_rows.append(rows[rng_perm[: take[y]]])
    test_idx = np.sort(np.concatenate(test_rows)) if test_rows else np.empty(0, dtype=np.int64)
    train_mask = np.ones(n, dtype=bool)
    train_mask[test_idx] = False
    train = SupervisedDataset(
        data.features[train_mask], data.labels[train_mask], data.class_count
    )
    test = SupervisedDataset(data.features[test_idx], data.labels[test_idx], data.class_count)
    return train, test


def make_gaussian_clusters(
    n: int,
    class_count: int = 3,
    dim: int = 2,
    sigma: float = 0.3,
    separation: float = 4.0,
    seed: int = 0,
) -> SupervisedDataset:
    """Balanced isotropic Gaussian clusters with pairwise center distance
    >= ``separation``.

    Centers sit on a circle in the first two dimensions (zeros elsewhere)
    whose radius makes adjacent centers exactly ``separation`` apart.
    """
    if class_count <= 2:
        raise DomainError("need class_count > 2")
    if dim < 2:
        raise DomainError("need dim >= 2")
    rng = stream(seed, "synth")
    radius = separation / (2.0 * np.sin(np.pi / class_count))
    angles = 2.0 * np.pi * np.arange(class_count) / class_count
    centers = np.zeros((class_count, dim))
    centers[:, 0] = radius * np.cos(angles)
    centers[:, 1] = radius * np.sin(angles)

    labels = np.arange(n) % class_count
    features = centers[labels] + sigma * rng.standard_normal((n, dim))
    perm = rng.permutation(n)
    return SupervisedDataset(features[perm], labels[perm], class_count)


_CONTAINER_VERSION = 1


def save_partial(path, data: PartialDataset) -> None:
    """Write a PartialDataset to a versioned npz container."""
    payload = {
        "format_version": np.int64(_CONTAINER_VERSION),
        "features": data.features,
        "candidates_packed": np.packbits(data.candidates, axis=1),
        "class_count": np.int64(data.class_count),
        "has_truth": np.bool_(data.hidden_truth is not None),
        "hidden_truth": data.hidden_truth
        if data.hidden_truth is not None
        else np.empty(0, dtype=np.int64),
        "has_flip_spec": np.bool_(data.flip_spec is not None),
    }
    if data.flip_spec is not None:
        payload["flip_kind"] = np.str_(data.flip_spec.kind)
        payload["flip_q"] = np.float64(data.flip_spec.q)
        payload["flip_seed"] = np.int64(data.flip_spec.seed)
    np.savez_compressed(path, **payload)


def load_partial(path) -> PartialDataset:
    """Read a PartialDataset container written by :func:`save_partial`."""
    with np.load(path, allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != _CONTAINER_VERSION:
            raise DataFormatError(f"{path}: container version {version}, expected {_CONTAINER_VERSION}")
        c = int(z["class_count"])
        candidates = np.unpackbits(z["candidates_packed"], axis=1)[:, :c].astype(bool)
        truth = z["hidden_truth"] if bool(z["has_truth"]) else None
        spec = None
        if bool(z["has_flip_spec"]):
            spec = FlipSpec(str(z["flip_kind"]), float(z["flip_q"]), int(z["flip_seed"]))
        return PartialDataset(z["features"], candidates, c, hidden_truth=truth, flip_spec=spec)
