"""Trainable models, local iteration steps, aggregation and metrics.

Two model families are supported: mini-batch K-means (unsupervised) and a
one-vs-rest linear SVM trained with per-sample subgradient steps and a
1/(lambda*t) step size. All operations are pure: they return new states
and never mutate their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

UTILITY_FLOOR = 1e-6


class DimensionMismatch(ValueError):
    """Batch feature width does not match the model."""


class ShapeMismatch(ValueError):
    """Models of different kind or shape were combined."""


class ZeroWeightSum(ValueError):
    """Aggregation weights sum to zero."""


class MissingTestSet(ValueError):
    """Test-set utility requested without a labeled test set."""


class EmptyTestSet(ValueError):
    """Evaluation requested on an empty test set."""


@dataclass
class Batch:
    """A slice of data points with optional integer labels."""

    points: np.ndarray
    labels: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class KMeansState:
    """K cluster centers plus cumulative assignment counts that drive the
    per-center step size 1/count."""

    centers: np.ndarray
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float)
        if self.counts is None:
            self.counts = np.zeros(self.centers.shape[0], dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)

    kind = "kmeans"

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def copy(self) -> "KMeansState":
        return KMeansState(self.centers.copy(), self.counts.copy())


@dataclass
class SvmState:
    """One-vs-rest linear classifier: per-class weight rows and biases."""

    weights: np.ndarray
    biases: np.ndarray
    lam: float = 1e-3
    step_counter: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.biases = np.asarray(self.biases, dtype=float)
        if self.lam <= 0:
            raise ValueError("lambda must be positive")

    kind = "svm"

    @classmethod
    def zeros(cls, n_classes: int, dim: int, lam: float = 1e-3) -> "SvmState":
        return cls(np.zeros((n_classes, dim)), np.zeros(n_classes), lam=lam)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "SvmState":
        return SvmState(self.weights.copy(), self.biases.copy(), self.lam, self.step_counter)


def _check_same_shape(a, b):
    if a.kind != b.kind:
        raise ShapeMismatch(f"cannot combine {a.kind} with {b.kind}")
    if a.kind == "kmeans":
        if a.centers.shape != b.centers.shape:
            raise ShapeMismatch("center matrices differ in shape")
    else:
        if a.weights.shape != b.weights.shape:
            raise ShapeMismatch("weight matrices differ in shape")


def local_iterate(model, batch: Batch):
    """One local iteration on a mini-batch; returns the updated model.

    K-means: sequential mini-batch update, each point pulls its nearest
    center with step size 1/count. SVM: one subgradient pass, per point
    and per class, with the step size fixed at the start of the batch.
    An empty batch returns the model unchanged.
    """
    if len(batch) == 0:
        return model.copy()
    points = np.asarray(batch.points, dtype=float)
    if points.shape[1] != model.dim:
        raise DimensionMismatch(
            f"batch dimension {points.shape[1]} != model dimension {model.dim}"
        )
    if model.kind == "kmeans":
        out = model.copy()
        centers, counts = out.centers, out.counts
        for x in points:
            c = int(np.argmin(((centers - x) ** 2).sum(axis=1)))
            counts[c] += 1.0
            centers[c] += (x - centers[c]) / counts[c]
        return out
    if batch.labels is None:
        raise DimensionMismatch("svm training batch needs labels")
    out = model.copy()
    out.step_counter += 1.0
    eta = 1.0 / (out.lam * out.step_counter)
    shrink = 1.0 - eta * out.lam
    w, b = out.weights, out.biases
    class_ids = np.arange(out.n_classes)
    for x, label in zip(points, np.asarray(batch.labels)):
        y = np.where(class_ids == label, 1.0, -1.0)
        violated = y * (w @ x + b) < 1.0
        w *= shrink
        if violated.any():
            w[violated] += eta * y[violated, None] * x[None, :]
            b[violated] += eta * y[violated]
    return out


def aggregate_weighted(models, weights):
    """Weighted average of same-shaped models (synchronous global update).

    K-means assignment counts are summed rather than averaged, so the
    aggregate's step sizes keep shrinking with total points processed.
    """
    if not models:
        raise ShapeMismatch("nothing to aggregate")
    for m in models[1:]:
        _check_same_shape(models[0], m)
    w = np.asarray(weights, dtype=float)
    if w.shape[0] != len(models) or (w < 0).any():
        raise ZeroWeightSum("weights must be non-negative and aligned with models")
    total = w.sum()
    if total <= 0:
        raise ZeroWeightSum("aggregation weights sum to zero")
    frac = w / total
    first = models[0]
    if first.kind == "kmeans":
        centers = sum(f * m.centers for f, m in zip(frac, models))
        counts = sum(m.counts for m in models)
        return KMeansState(centers, counts)
    weights_out = sum(f * m.weights for f, m in zip(frac, models))
    biases = sum(f * m.biases for f, m in zip(frac, models))
    step = float(sum(f * m.step_counter for f, m in zip(frac, models)))
    return SvmState(weights_out, biases, first.lam, step)


def async_merge(global_model, local_model, staleness: int, alpha0: float):
    """Staleness-discounted merge of one local model into the global one:
    alpha = alpha0 / (1 + staleness), result = (1-alpha)*global + alpha*local."""
    _check_same_shape(global_model, local_model)
    if staleness < 0:
        raise ValueError("staleness must be non-negative")
    if not 0.0 < alpha0 <= 1.0:
        raise ValueError("alpha0 must lie in (0, 1]")
    alpha = alpha0 / (1.0 + staleness)
    keep = 1.0 - alpha
    if global_model.kind == "kmeans":
        return KMeansState(
            keep * global_model.centers + alpha * local_model.centers,
            keep * global_model.counts + alpha * local_model.counts,
        )
    return SvmState(
        keep * global_model.weights + alpha * local_model.weights,
        keep * global_model.biases + alpha * local_model.biases,
        global_model.lam,
        keep * global_model.step_counter + alpha * local_model.step_counter,
    )


def _matched_center_distance(prev: KMeansState, new: KMeansState) -> float:
    """Euclidean distance between center sets after greedily matching each
    new center to its nearest unused previous center, so a pure reordering
    of centers yields distance zero."""
    prev_c, new_c = prev.centers, new.centers
    k = prev_c.shape[0]
    d2 = ((new_c[:, None, :] - prev_c[None, :, :]) ** 2).sum(axis=2)
    order = np.argsort(d2, axis=None)
    used_new = np.zeros(k, dtype=bool)
    used_prev = np.zeros(k, dtype=bool)
    total = 0.0
    matched = 0
    for flat in order:
        i, j = divmod(int(flat), k)
        if used_new[i] or used_prev[j]:
            continue
        used_new[i] = used_prev[j] = True
        total += d2[i, j]
        matched += 1
        if matched == k:
            break
    return float(np.sqrt(total))


def param_distance(prev, new) -> float:
    """Euclidean distance between the parameter vectors of two models."""
    _check_same_shape(prev, new)
    if prev.kind == "kmeans":
        return _matched_center_distance(prev, new)
    dw = new.weights - prev.weights
    db = new.biases - prev.biases
    return float(np.sqrt((dw**2).sum() + (db**2).sum()))


def utility(prev_global, new_global, mode: str = "param-delta", testset: Batch | None = None) -> float:
    """Reward in (0, 1] for one global update.

    "param-delta": 1/(1 + distance between consecutive global parameters),
    a monotone map of the negative parameter drift onto (0, 1].
    "test-set": held-out metric (macro-F1 for K-means, accuracy for SVM),
    floored at a small positive value so rewards stay in (0, 1].
    """
    if mode == "param-delta":
        delta = param_distance(prev_global, new_global)
        return 1.0 / (1.0 + delta)
    if mode == "test-set":
        if testset is None or testset.labels is None:
            raise MissingTestSet("test-set utility needs a labeled test set")
        if new_global.kind == "kmeans":
            value = evaluate_f1(new_global, testset)
        else:
            value = evaluate_accuracy(new_global, testset)
        return max(value, UTILITY_FLOOR)
    raise ValueError(f"unknown utility mode {mode!r}")


def kmeans_assign(model: KMeansState, points: np.ndarray) -> np.ndarray:
    """Index of the nearest center for each point."""
    d2 = ((points[:, None, :] - model.centers[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


def svm_predict(model: SvmState, points: np.ndarray) -> np.ndarray:
    """Argmax class per point; ties resolve to the lowest class index."""
    scores = points @ model.weights.T + model.biases
    return scores.argmax(axis=1)


def evaluate_f1(model: KMeansState, testset: Batch) -> float:
    """Macro F1 of cluster assignments against labels, after matching
    clusters to labels one-to-one to maximize total F1."""
    if testset.labels is None or len(testset) == 0:
        raise EmptyTestSet("F1 evaluation needs a non-empty labeled test set")
    assign = kmeans_assign(model, np.asarray(testset.points, dtype=float))
    labels = np.asarray(testset.labels)
    k = model.centers.shape[0]
    classes = np.unique(labels)
    f1 = np.zeros((k, classes.shape[0]))
    for ci in range(k):
        in_cluster = assign == ci
        for li, lab in enumerate(classes):
            in_class = labels == lab
            tp = float(np.sum(in_cluster & in_class))
            if tp == 0.0:
                continue
            precision = tp / in_cluster.sum()
            recall = tp / in_class.sum()
            f1[ci, li] = 2 * precision * recall / (precision + recall)
    rows, cols = linear_sum_assignment(f1, maximize=True)
    return float(f1[rows, cols].sum() / classes.shape[0])


def evaluate_accuracy(model: SvmState, testset: Batch) -> float:
    """Fraction of test points whose argmax class matches the label."""
    if testset.labels is None or len(testset) == 0:
        raise EmptyTestSet("accuracy evaluation needs a non-empty labeled test set")
    predicted = svm_predict(model, np.asarray(testset.points, dtype=float))
    return float(np.mean(predicted == np.asarray(testset.labels)))


def init_kmeans_plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> KMeansState:
    """Seed K centers with the k-means++ rule (distance-squared sampling)."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n < k:
        raise ValueError(f"need at least {k} points to seed {k} centers")
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[int(rng.integers(n))]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[i:] = centers[0]
            break
        probs = d2 / total
        centers[i] = points[int(rng.choice(n, p=probs))]
        d2 = np.minimum(d2, ((points - centers[i]) ** 2).sum(axis=1))
    return KMeansState(centers)
