"""Dataset ingestion, synthetic generators, and edge partitioning."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError
from .learners import SvmState

MAX_PARTITION_RETRIES = 100


class ParseError(ValueError):
    """A CSV row could not be parsed. Carries the 1-based file line."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class PartitionError(RuntimeError):
    """Could not produce non-empty shards within the retry limit."""


@dataclass
class Dataset:
    """Feature matrix with optional integer labels."""

    points: np.ndarray
    labels: Optional[np.ndarray] = None
    name: str = "dataset"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, indices) -> "Dataset":
        labels = None if self.labels is None else self.labels[indices]
        return Dataset(self.points[indices], labels, self.name)


@dataclass
class PartitionSpec:
    """How to split a dataset across edges.

    scheme "iid" shuffles and splits evenly; "label-skew" draws per-class
    edge proportions from Dirichlet(beta) (smaller beta = stronger skew).
    """

    scheme: str = "iid"
    n_edges: int = 1
    beta: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in ("iid", "label-skew"):
            raise ConfigError(f"unknown partition scheme {self.scheme!r}", key="data.partition")
        if self.n_edges < 1:
            raise ConfigError("need at least one edge", key="fleet.n")
        if self.beta <= 0:
            raise ConfigError("dirichlet beta must be positive", key="data.beta")


def _is_integral(text: str) -> bool:
    try:
        value = float(text)
    except ValueError:
        return False
    return value == int(value) and value >= 0


def load_csv(path, labeled: bool | None = None) -> Dataset:
    """Parse a comma-separated dataset: feature columns then an optional
    integer label column. A non-numeric first row is treated as a header.
    When `labeled` is None, the last column is taken as labels iff every
    value in it is a non-negative integer.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [(i + 1, row) for i, row in enumerate(rows) if row and any(c.strip() for c in row)]
    if not rows:
        raise ParseError(1, "empty file")

    def parse_row(line, row):
        values = []
        for cell in row:
            try:
                values.append(float(cell))
            except ValueError:
                raise ParseError(line, f"non-numeric value {cell.strip()!r}") from None
        return values

    first_line, first = rows[0]
    has_header = not any(_is_float(c) for c in first)
    data_rows = rows[1:] if has_header else rows
    if not data_rows:
        raise ParseError(first_line, "no data rows")
    width = len(data_rows[0][1])
    parsed = []
    for line, row in data_rows:
        if len(row) != width:
            raise ParseError(line, f"expected {width} columns, found {len(row)}")
        parsed.append((line, parse_row(line, row)))
    if labeled is None:
        labeled = width >= 2 and all(_is_integral(row[-1]) for _, row in data_rows)
    if labeled and width < 2:
        raise ParseError(data_rows[0][0], "labeled data needs at least one feature column")
    matrix = np.array([values for _, values in parsed], dtype=float)
    if labeled:
        return Dataset(matrix[:, :-1], matrix[:, -1].astype(int), name=str(path))
    return Dataset(matrix, None, name=str(path))


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def save_csv(dataset: Dataset, path) -> None:
    """Write a dataset in the format load_csv reads (header included)."""
    header = [f"f{i}" for i in range(dataset.dim)]
    if dataset.labels is not None:
        header.append("label")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(dataset)):
            row = [repr(float(v)) for v in dataset.points[i]]
            if dataset.labels is not None:
                row.append(str(int(dataset.labels[i])))
            writer.writerow(row)


def gen_blobs(k: int, dim: int, n: int, separation: float, noise_sigma: float, seed) -> Dataset:
    """Gaussian blobs with pairwise center distance >= separation; labels
    record the generating cluster."""
    if k < 1 or n < k:
        raise ConfigError("need n >= k >= 1", key="data.k")
    if separation < 0 or noise_sigma < 0:
        raise ConfigError("separation and noise must be non-negative", key="data.separation")
    rng = np.random.default_rng(seed)
    box = max(separation, 1.0) * max(2.0, k ** (1.0 / dim))
    centers = np.empty((k, dim))
    placed = 0
    attempts = 0
    while placed < k:
        candidate = rng.uniform(0.0, box, size=dim)
        if placed == 0 or np.sqrt(((centers[:placed] - candidate) ** 2).sum(axis=1)).min() >= separation:
            centers[placed] = candidate
            placed += 1
        attempts += 1
        if attempts > 1000 * k:
            box *= 1.5
            attempts = 0
            placed = 0
    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    points = []
    labels = []
    for i, size in enumerate(sizes):
        points.append(centers[i] + noise_sigma * rng.standard_normal((size, dim)))
        labels.append(np.full(size, i, dtype=int))
    return Dataset(np.concatenate(points), np.concatenate(labels), name=f"blobs-k{k}")


def gen_linear_multiclass(
    n_classes: int,
    dim: int,
    n: int,
    margin: float,
    seed,
    label_noise: float = 0.0,
) -> tuple[Dataset, SvmState]:
    """Points labeled by a planted one-vs-rest linear model whose top two
    class scores differ by at least `margin`. Returns the dataset and the
    planted model (for oracle checks). `label_noise` flips that fraction
    of labels to a different class.
    """
    if n_classes < 2:
        raise ConfigError("need at least two classes", key="data.c")
    if margin < 0 or not 0.0 <= label_noise < 1.0:
        raise ConfigError("invalid margin or label noise", key="data.margin")
    rng = np.random.default_rng(seed)
    planted = rng.standard_normal((n_classes, dim))
    planted /= np.sqrt((planted**2).sum(axis=1, keepdims=True))
    model = SvmState(planted, np.zeros(n_classes))
    kept_points = []
    kept_labels = []
    remaining = n
    while remaining > 0:
        batch = rng.standard_normal((max(2 * remaining, 256), dim))
        scores = batch @ planted.T
        top2 = np.partition(scores, -2, axis=1)[:, -2:]
        ok = (top2[:, 1] - top2[:, 0]) >= margin
        accepted = batch[ok][:remaining]
        kept_points.append(accepted)
        kept_labels.append(scores[ok].argmax(axis=1)[:remaining])
        remaining -= accepted.shape[0]
    points = np.concatenate(kept_points)
    labels = np.concatenate(kept_labels)
    if label_noise > 0.0:
        flip = rng.random(n) < label_noise
        offsets = rng.integers(1, n_classes, size=n)
        labels = np.where(flip, (labels + offsets) % n_classes, labels)
    return Dataset(points, labels, name=f"linear-c{n_classes}"), model


def partition(dataset: Dataset, spec: PartitionSpec) -> list[Dataset]:
    """Split a dataset into disjoint, exhaustive, non-empty shards."""
    n = len(dataset)
    if spec.n_edges > n:
        raise ConfigError("more edges than data points", key="fleet.n")
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), 41]))
    for _ in range(MAX_PARTITION_RETRIES):
        if spec.scheme == "iid":
            order = rng.permutation(n)
            shards = [idx for idx in np.array_split(order, spec.n_edges)]
        else:
            if dataset.labels is None:
                raise ConfigError("label-skew partition needs labels", key="data.partition")
            shards = [[] for _ in range(spec.n_edges)]
            for label in np.unique(dataset.labels):
                members = rng.permutation(np.flatnonzero(dataset.labels == label))
                proportions = rng.dirichlet(np.full(spec.n_edges, spec.beta))
                cuts = np.floor(np.cumsum(proportions)[:-1] * members.shape[0]).astype(int)
                for shard, part in zip(shards, np.split(members, cuts)):
                    shard.extend(part.tolist())
            shards = [np.array(sorted(s), dtype=int) for s in shards]
        if all(len(s) > 0 for s in shards):
            return [dataset.subset(s) for s in shards]
    raise PartitionError(
        f"could not build {spec.n_edges} non-empty shards in {MAX_PARTITION_RETRIES} tries"
    )
