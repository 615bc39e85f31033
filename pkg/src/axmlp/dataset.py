"""Tabular dataset loading, splitting, normalization and input quantization."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed or unusable dataset input."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # float64, (n_samples, n_features)
    labels: np.ndarray  # int64, (n_samples,)
    feature_names: tuple[str, ...] | None = None
    num_classes: int | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise DatasetError(f"features must be 2-D, got shape {feats.shape}")
        if labels.shape != (feats.shape[0],):
            raise DatasetError(
                f"labels shape {labels.shape} does not match {feats.shape[0]} rows"
            )
        num_classes = self.num_classes
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if labels.size else 0
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise DatasetError(f"labels must lie in [0, {num_classes})")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "num_classes", num_classes)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> "Dataset":
        return Dataset(
            self.features[index], self.labels[index], self.feature_names, self.num_classes
        )


@dataclass(frozen=True)
class NormalizationParams:
    minimum: np.ndarray
    maximum: np.ndarray

    def apply(self, features: np.ndarray, clamp: bool = True) -> np.ndarray:
        span = self.maximum - self.minimum
        const = span == 0
        out = (features - self.minimum) / np.where(const, 1.0, span)
        # Constant training columns carry no information; map them to 0.
        out[:, const] = 0.0
        if clamp:
            out = np.clip(out, 0.0, 1.0)
        return out


@dataclass(frozen=True)
class QuantizedDataset:
    features: np.ndarray  # int64, every value < 2**input_bits
    labels: np.ndarray
    input_bits: int = 4
    num_classes: int | None = None

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def dequantized(self) -> np.ndarray:
        """Features mapped back onto the [0, 1] grid they were quantized from."""
        return self.features / float((1 << self.input_bits) - 1)


def round_half_up(x):
    """Round to nearest integer with ties toward +inf (floor(x + 0.5))."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.int64)


def _parses_as_float(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, label_column: int | str = -1) -> Dataset:
    """Load a comma-separated file; one column holds class labels.

    ``label_column`` is a column index (negative counts from the end) or a
    header name. A header row is detected when any cell of the first row,
    other than the label cell, does not parse as a number. Labels are
    re-indexed densely from 0 in sorted order (numeric order when every label
    is numeric).
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"{path}: no such file")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DatasetError(f"{path}: empty file")
    rows = [[c.strip() for c in r] for r in rows]
    width = len(rows[0])

    header = None
    if isinstance(label_column, str) and not _is_int(label_column):
        header = rows[0]
        if label_column not in header:
            raise DatasetError(f"{path}: label column {label_column!r} not in header")
        label_idx = header.index(label_column)
    else:
        label_idx = int(label_column)
        if not -width <= label_idx < width:
            raise DatasetError(f"{path}: label column {label_idx} out of range for {width} columns")
        label_idx %= width
        if any(not _parses_as_float(c) for j, c in enumerate(rows[0]) if j != label_idx):
            header = rows[0]
    body = rows[1:] if header is not None else rows
    first_line = 2 if header is not None else 1
    if not body:
        raise DatasetError(f"{path}: no data rows")

    feats = np.empty((len(body), width - 1), dtype=np.float64)
    raw_labels = []
    for r, row in enumerate(body):
        line = first_line + r
        if len(row) != width:
            raise DatasetError(
                f"{path}: row {line} has {len(row)} columns, expected {width}"
            )
        j_out = 0
        for j, cell in enumerate(row):
            if j == label_idx:
                raw_labels.append(cell)
                continue
            try:
                feats[r, j_out] = float(cell)
            except ValueError:
                col = header[j] if header is not None else str(j)
                raise DatasetError(
                    f"{path}: row {line}, column {col}: non-numeric value {cell!r}"
                ) from None
            j_out += 1

    if all(_parses_as_float(c) for c in raw_labels):
        # "1" and "1.0" name the same class
        keys = [float(c) for c in raw_labels]
    else:
        keys = raw_labels
    index = {k: i for i, k in enumerate(sorted(set(keys)))}
    labels = np.array([index[k] for k in keys], dtype=np.int64)
    num_classes = int(labels.max()) + 1
    if num_classes < 2:
        raise DatasetError(f"{path}: need at least 2 classes, found {num_classes}")

    names = None
    if header is not None:
        names = tuple(h for j, h in enumerate(header) if j != label_idx)
    return Dataset(feats, labels, names, num_classes)


def _is_int(s: str) -> bool:
    try:
        int(s)
    except ValueError:
        return False
    return True


BUILTIN = {
    # name: (file, label column)
    "breast_cancer": ("breast_cancer.csv", "class"),
    "pendigits": ("pendigits.csv", "digit"),
    "mammographic": ("mammographic.csv", "severity"),
}


def builtin_path(name: str) -> Path:
    if name not in BUILTIN:
        raise DatasetError(f"unknown builtin dataset {name!r}; have {sorted(BUILTIN)}")
    return Path(str(resources.files("axmlp") / "data" / BUILTIN[name][0]))


def load_builtin(name: str) -> Dataset:
    """Load one of the datasets shipped with the package."""
    return load_csv(builtin_path(name), BUILTIN[name][1])


def split(ds: Dataset, train_fraction: float = 0.7, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded shuffle then cut; the train part holds round(train_fraction * N) rows."""
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(ds)
    if n == 0:
        raise DatasetError("cannot split an empty dataset")
    n_train = int(math.floor(train_fraction * n + 0.5))
    if n_train == 0 or n_train == n:
        raise DatasetError(f"split of {n} rows at {train_fraction} leaves an empty part")
    perm = np.random.default_rng(seed).permutation(n)
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))


def normalize(train: Dataset, test: Dataset) -> tuple[Dataset, Dataset, NormalizationParams]:
    """Min-max scale with parameters from ``train``; ``test`` is clamped into [0, 1]."""
    if len(train) == 0:
        raise DatasetError("cannot normalize with an empty training set")
    params = NormalizationParams(train.features.min(axis=0), train.features.max(axis=0))
    tr = Dataset(params.apply(train.features, clamp=False), train.labels,
                 train.feature_names, train.num_classes)
    te = Dataset(params.apply(test.features), test.labels,
                 test.feature_names, test.num_classes)
    return tr, te, params


def quantize_inputs(ds: Dataset, input_bits: int = 4) -> QuantizedDataset:
    """q = round_half_up(x * (2**input_bits - 1)) for features already in [0, 1]."""
    if input_bits < 1:
        raise DatasetError(f"input_bits must be >= 1, got {input_bits}")
    x = ds.features
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise DatasetError("features must be normalized into [0, 1] before quantization")
    q = round_half_up(x * ((1 << input_bits) - 1))
    return QuantizedDataset(q, ds.labels.copy(), input_bits, ds.num_classes)


def prepare(ds: Dataset, train_fraction: float = 0.7, seed: int = 0,
            input_bits: int = 4) -> tuple[QuantizedDataset, QuantizedDataset]:
    """split -> normalize -> quantize, the standard ingestion chain."""
    train, test = split(ds, train_fraction, seed)
    train, test, _ = normalize(train, test)
    return quantize_inputs(train, input_bits), quantize_inputs(test, input_bits)
