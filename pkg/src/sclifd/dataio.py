"""CSV ingestion, synthetic Gaussian blobs, and incremental session schedules."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from sclifd.errors import DataError


class Sample(NamedTuple):
    features: np.ndarray
    label: int


@dataclass
class Dataset:
    """Feature matrix ``X`` (n, d) with integer labels ``y`` (n,)."""

    X: np.ndarray
    y: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise DataError(f"inconsistent dataset shapes X={self.X.shape} y={self.y.shape}")
        if not np.all(np.isfinite(self.X)):
            raise DataError("dataset contains non-finite features")

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def classes(self) -> set[int]:
        return {int(c) for c in np.unique(self.y)}

    def __len__(self):
        return self.X.shape[0]

    @property
    def samples(self) -> list[Sample]:
        return [Sample(x, int(c)) for x, c in zip(self.X, self.y)]


def load_csv(path) -> Dataset:
    """Read a header-first CSV with an integer ``label`` column.

    Data rows are numbered from 1 in error messages (the header is row 0).
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"CSV file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, no header row") from None
        if "label" not in header:
            raise DataError(f"{path}: missing 'label' column")
        label_col = header.index("label")
        names = [h for i, h in enumerate(header) if i != label_col]
        rows, labels = [], []
        for row_idx, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {row_idx} has {len(row)} cells, expected {len(header)}"
                )
            feats = []
            for col, cell in enumerate(row):
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {row_idx}, column {header[col]!r}: non-numeric cell {cell!r}"
                    ) from None
                if not math.isfinite(value):
                    raise DataError(f"{path}: row {row_idx}, column {header[col]!r}: non-finite value {cell!r}")
                if col == label_col:
                    if value != int(value) or value < 0:
                        raise DataError(f"{path}: row {row_idx}: label {cell!r} is not a non-negative integer")
                    labels.append(int(value))
                else:
                    feats.append(value)
            rows.append(feats)
    if not rows:
        raise DataError(f"{path}: no samples")
    return Dataset(np.array(rows, dtype=np.float64), np.array(labels, dtype=np.int64), names)


def write_csv(dataset: Dataset, path) -> None:
    names = dataset.feature_names or [f"f{i}" for i in range(dataset.d)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*names, "label"])
        for x, c in zip(dataset.X, dataset.y):
            w.writerow([repr(float(v)) for v in x] + [int(c)])


@dataclass(frozen=True)
class BlobConfig:
    num_classes: int = 6
    d: int = 10
    mean_separation: float = 6.0
    within_std: float = 1.0
    samples_per_class: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.d < 1 or self.samples_per_class < 1:
            raise ValueError("d and samples_per_class must be positive")
        if self.mean_separation < 0:
            raise ValueError("mean_separation must be >= 0")
        if not self.within_std > 0:
            raise ValueError("within_std must be > 0")


def _min_pairwise(points):
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    dist[np.diag_indices(len(points))] = np.inf
    return dist.min()


def synth_blobs(cfg: BlobConfig, max_retries: int = 100) -> Dataset:
    """Isotropic Gaussian classes whose closest pair of means sits exactly
    ``mean_separation * within_std`` apart; all other pairs are farther."""
    rng = np.random.default_rng(cfg.seed)
    for _ in range(max_retries):
        means = rng.normal(size=(cfg.num_classes, cfg.d))
        dmin = _min_pairwise(means)
        if dmin > 1e-6:
            break
    else:
        raise DataError(f"could not place {cfg.num_classes} distinct class means in {max_retries} tries")
    means *= cfg.mean_separation * cfg.within_std / dmin
    X = np.concatenate([
        mu + cfg.within_std * rng.normal(size=(cfg.samples_per_class, cfg.d)) for mu in means
    ])
    y = np.repeat(np.arange(cfg.num_classes), cfg.samples_per_class)
    return Dataset(X, y, [f"f{i}" for i in range(cfg.d)])


@dataclass
class SessionSchedule:
    sessions: list[list[int]]
    shot: int
    train_count: dict[int, int]
    test_count: dict[int, int]
    train_idx: dict[int, np.ndarray]
    test_idx: dict[int, np.ndarray]

    @property
    def class_order(self) -> list[int]:
        return [c for s in self.sessions for c in s]

    def session_train(self, k: int) -> np.ndarray:
        """Dataset row indices of the training data introduced in session ``k`` (0-based)."""
        return np.concatenate([self.train_idx[c] for c in self.sessions[k]])

    def joint_test(self, k: int) -> np.ndarray:
        """Test rows of every class seen up to and including session ``k``."""
        return np.concatenate([self.test_idx[c] for s in self.sessions[: k + 1] for c in s])

    def to_dict(self) -> dict:
        return {
            "sessions": self.sessions,
            "shot": self.shot,
            "train_count": {str(c): n for c, n in self.train_count.items()},
            "test_count": {str(c): n for c, n in self.test_count.items()},
            "train_idx": {str(c): v.tolist() for c, v in self.train_idx.items()},
            "test_idx": {str(c): v.tolist() for c, v in self.test_idx.items()},
        }


def make_schedule(dataset: Dataset, class_order, shot, normal_train, fault_train,
                  test_per_class, seed) -> SessionSchedule:
    """Split classes into sessions of ``shot`` and draw disjoint train/test rows.

    ``class_order[0]`` is the normal class and gets ``normal_train`` training
    rows; every other class gets ``fault_train``.
    """
    order = [int(c) for c in class_order]
    if len(set(order)) != len(order):
        raise DataError(f"class_order has duplicates: {order}")
    missing = set(order) - dataset.classes
    if missing:
        raise DataError(f"class_order names classes absent from the dataset: {sorted(missing)}")
    if shot < 1:
        raise DataError("shot must be >= 1")
    rng = np.random.default_rng(seed)
    train_count, test_count, train_idx, test_idx = {}, {}, {}, {}
    for pos, c in enumerate(order):
        n_train = normal_train if pos == 0 else fault_train
        rows = np.flatnonzero(dataset.y == c)
        need = n_train + test_per_class
        if n_train < 1 or test_per_class < 1:
            raise DataError("train and test counts must be positive")
        if need > len(rows):
            raise DataError(f"class {c}: requested {n_train} train + {test_per_class} test, only {len(rows)} available")
        perm = rng.permutation(rows)
        train_idx[c] = np.sort(perm[:n_train])
        test_idx[c] = np.sort(perm[n_train:need])
        train_count[c] = n_train
        test_count[c] = test_per_class
    sessions = [order[i:i + shot] for i in range(0, len(order), shot)]
    return SessionSchedule(sessions, shot, train_count, test_count, train_idx, test_idx)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        std = X.std(axis=0)
        std[std == 0] = 1.0
        return cls(X.mean(axis=0), std)

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std
