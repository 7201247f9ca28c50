"""Deterministic 2-D synthetic data: Gaussian ID classes, a pseudo-OOD cluster
exposed during training, and a disjoint true-OOD cluster reserved for testing."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

ROLE_ID = "ID"
ROLE_PSEUDO_OOD = "pseudo-OOD"
ROLE_TRUE_OOD = "true-OOD"
_ROLES = (ROLE_ID, ROLE_PSEUDO_OOD, ROLE_TRUE_OOD)

OOD_LABEL = -1

# equilateral triangle of radius 4 around the origin
_DEFAULT_MEANS = (
    (0.0, 4.0),
    (-2.0 * math.sqrt(3.0), -2.0),
    (2.0 * math.sqrt(3.0), -2.0),
)
_UNIT_COV = ((1.0, 0.0), (0.0, 1.0))


class DatasetFormatError(ValueError):
    """A dataset file failed to parse; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class LabeledPoint:
    x: tuple[float, float]
    label: int
    role: str

    def __post_init__(self):
        if self.role not in _ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if (self.label == OOD_LABEL) != (self.role != ROLE_ID):
            raise ValueError("label must be a class index exactly for ID points")


@dataclass(frozen=True)
class DatasetSplit:
    """Train/val hold ID and pseudo-OOD points; true-OOD appears only in test."""

    train: tuple[LabeledPoint, ...]
    val: tuple[LabeledPoint, ...]
    test: tuple[LabeledPoint, ...]

    def __post_init__(self):
        for p in self.train + self.val:
            if p.role == ROLE_TRUE_OOD:
                raise ValueError("true-OOD points may only appear in the test split")
        for p in self.test:
            if p.role == ROLE_PSEUDO_OOD:
                raise ValueError("pseudo-OOD points may not appear in the test split")


def _as_cov(matrix) -> tuple[tuple[float, float], tuple[float, float]]:
    m = np.asarray(matrix, dtype=float)
    if m.shape != (2, 2):
        raise ValueError("covariances must be 2x2")
    if not np.allclose(m, m.T):
        raise ValueError("covariance must be symmetric")
    eigvals = np.linalg.eigvalsh(m)
    if eigvals.min() <= 0.0:
        raise ValueError("degenerate covariance: not positive definite")
    return tuple(tuple(float(v) for v in row) for row in m)


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    n_id_per_class: int = 300
    n_pseudo_ood: int = 300
    n_true_ood: int = 60
    class_means: tuple[tuple[float, float], ...] = _DEFAULT_MEANS
    class_covariances: tuple = (_UNIT_COV,) * 3
    pseudo_ood_mean: tuple[float, float] = (0.0, 0.0)
    pseudo_ood_cov: tuple = _UNIT_COV
    true_ood_mean: tuple[float, float] = (8.0, 8.0)
    true_ood_cov: tuple = _UNIT_COV
    seed: int = 7

    def __post_init__(self):
        if len(self.class_means) < 2:
            raise ValueError("need at least 2 ID classes")
        if len(self.class_covariances) != len(self.class_means):
            raise ValueError("one covariance per class mean required")
        if min(self.n_id_per_class, self.n_pseudo_ood, self.n_true_ood) < 0:
            raise ValueError("counts must be nonnegative")
        if self.n_id_per_class < 1:
            raise ValueError("need at least one ID point per class")
        if tuple(self.true_ood_mean) == tuple(self.pseudo_ood_mean):
            raise ValueError("true-OOD mean must differ from the pseudo-OOD mean")
        object.__setattr__(self, "class_means", tuple(tuple(float(v) for v in m) for m in self.class_means))
        object.__setattr__(self, "class_covariances", tuple(_as_cov(c) for c in self.class_covariances))
        object.__setattr__(self, "pseudo_ood_mean", tuple(float(v) for v in self.pseudo_ood_mean))
        object.__setattr__(self, "true_ood_mean", tuple(float(v) for v in self.true_ood_mean))
        object.__setattr__(self, "pseudo_ood_cov", _as_cov(self.pseudo_ood_cov))
        object.__setattr__(self, "true_ood_cov", _as_cov(self.true_ood_cov))

    @property
    def n_classes(self) -> int:
        return len(self.class_means)


def _box_muller(rng: np.random.Generator, n: int) -> np.ndarray:
    """n standard normals from uniform pairs; 1 - U keeps the log argument in (0, 1]."""
    m = (n + 1) // 2
    u1 = 1.0 - rng.random(m)
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
    return z[:n]


def _gaussian_cluster(rng, n: int, mean, cov) -> np.ndarray:
    z = _box_muller(rng, 2 * n).reshape(n, 2)
    chol = np.linalg.cholesky(np.asarray(cov, dtype=float))
    return np.asarray(mean, dtype=float) + z @ chol.T


def generate(spec: SyntheticDatasetSpec) -> DatasetSplit:
    """Draw all clusters with one seeded stream and split 70/15/15 (ID) and 70/30 (pseudo-OOD)."""
    rng = np.random.default_rng(spec.seed)
    train: list[LabeledPoint] = []
    val: list[LabeledPoint] = []
    test: list[LabeledPoint] = []

    for klass, (mean, cov) in enumerate(zip(spec.class_means, spec.class_covariances)):
        pts = _gaussian_cluster(rng, spec.n_id_per_class, mean, cov)
        n = spec.n_id_per_class
        n_tr = int(0.7 * n)
        n_val = int(0.15 * n)
        for i, row in enumerate(pts):
            point = LabeledPoint((float(row[0]), float(row[1])), klass, ROLE_ID)
            if i < n_tr:
                train.append(point)
            elif i < n_tr + n_val:
                val.append(point)
            else:
                test.append(point)

    if spec.n_pseudo_ood:
        pts = _gaussian_cluster(rng, spec.n_pseudo_ood, spec.pseudo_ood_mean, spec.pseudo_ood_cov)
        n_tr = int(0.7 * spec.n_pseudo_ood)
        for i, row in enumerate(pts):
            point = LabeledPoint((float(row[0]), float(row[1])), OOD_LABEL, ROLE_PSEUDO_OOD)
            (train if i < n_tr else val).append(point)

    if spec.n_true_ood:
        pts = _gaussian_cluster(rng, spec.n_true_ood, spec.true_ood_mean, spec.true_ood_cov)
        for row in pts:
            test.append(LabeledPoint((float(row[0]), float(row[1])), OOD_LABEL, ROLE_TRUE_OOD))

    return DatasetSplit(tuple(train), tuple(val), tuple(test))


_CSV_HEADER = ["x1", "x2", "label", "role", "split"]


def write_csv(split: DatasetSplit, path) -> None:
    """One row per point; floats via repr so a read-back is bit-identical."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_HEADER)
        for split_name, points in (("train", split.train), ("val", split.val), ("test", split.test)):
            for p in points:
                writer.writerow([repr(p.x[0]), repr(p.x[1]), p.label, p.role, split_name])


def read_csv(path) -> DatasetSplit:
    buckets: dict[str, list[LabeledPoint]] = {"train": [], "val": [], "test": []}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError("empty dataset file") from None
        if header != _CSV_HEADER:
            raise DatasetFormatError(f"bad header {header!r}, expected {_CSV_HEADER!r}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(_CSV_HEADER):
                raise DatasetFormatError(f"expected {len(_CSV_HEADER)} columns, got {len(row)}", lineno)
            x1s, x2s, labels, role, split_name = row
            try:
                x = (float(x1s), float(x2s))
                label = int(labels)
            except ValueError:
                raise DatasetFormatError(f"bad numeric field in {row!r}", lineno) from None
            if role not in _ROLES:
                raise DatasetFormatError(f"unknown role token {role!r}", lineno)
            if split_name not in buckets:
                raise DatasetFormatError(f"unknown split token {split_name!r}", lineno)
            try:
                point = LabeledPoint(x, label, role)
            except ValueError as exc:
                raise DatasetFormatError(str(exc), lineno) from None
            buckets[split_name].append(point)
    if not any(buckets.values()):
        raise DatasetFormatError("dataset file contains no data rows")
    return DatasetSplit(tuple(buckets["train"]), tuple(buckets["val"]), tuple(buckets["test"]))
