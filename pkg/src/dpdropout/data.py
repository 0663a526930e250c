"""Dataset loading and minibatch sampling.

Two on-disk formats are supported:

* MNIST IDX files (big-endian; image magic ``0x00000803``, label magic
  ``0x00000801``), optionally gzip-compressed. Pixels are scaled by 1/255.
* DIGITS CSV: 65 comma-separated integers per line, no header; 64 pixel
  values in 0..16 followed by the label 0..9. Pixels are scaled by 1/16.

A DIGITS split ships with the package, see :func:`load_bundled_digits`.
"""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "FormatError",
    "Dataset",
    "Minibatch",
    "load_idx",
    "load_digits_csv",
    "load_bundled_digits",
    "sample_minibatch",
    "BUNDLED_DIGITS_SIZES",
]

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

# 1797 images in total, split 1439 / 358
BUNDLED_DIGITS_SIZES = (1439, 358)


class FormatError(ValueError):
    """A data file does not follow its declared format."""


@dataclass(frozen=True)
class Dataset:
    """Features scaled to [0, 1] with integer labels in ``[0, n_classes)``.

    Arrays are made read-only on construction.
    """

    features: np.ndarray
    labels: np.ndarray
    n_classes: int = 10

    def __post_init__(self):
        x = np.array(self.features, dtype=float)
        y = np.array(self.labels, dtype=np.int64)
        if x.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise ValueError(f"{x.shape[0]} feature rows but labels of shape {y.shape}")
        if x.size and (x.min() < 0 or x.max() > 1):
            raise ValueError("features must lie in [0, 1]")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def n_examples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices], self.n_classes)


@dataclass(frozen=True)
class Minibatch:
    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray

    @property
    def size(self) -> int:
        return len(self.indices)


def _read_bytes(path) -> bytes:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_idx(raw: bytes, expected_magic: int, what: str, path) -> np.ndarray:
    if len(raw) < 4:
        raise FormatError(f"{path}: {what} file too short for a magic number")
    (magic,) = struct.unpack_from(">I", raw)
    if magic != expected_magic:
        raise FormatError(f"{path}: {what} magic is 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: {what} header truncated")
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    count = int(np.prod(dims))
    payload = raw[header:]
    if len(payload) != count:
        raise FormatError(
            f"{path}: {what} payload has {len(payload)} bytes, dims {dims} need {count}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path, n_classes: int = 10) -> Dataset:
    """Load an IDX image/label file pair (plain or gzipped)."""
    images = _parse_idx(_read_bytes(images_path), IMAGE_MAGIC, "image", images_path)
    labels = _parse_idx(_read_bytes(labels_path), LABEL_MAGIC, "label", labels_path)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"image count {images.shape[0]} does not match label count {labels.shape[0]}"
        )
    if labels.size and labels.max() >= n_classes:
        raise FormatError(f"{labels_path}: label {labels.max()} out of range [0, {n_classes})")
    features = images.reshape(images.shape[0], -1).astype(float) / 255.0
    return Dataset(features, labels.astype(np.int64), n_classes)


def _read_digits_csv(path) -> Dataset:
    rows, labels = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 65:
                raise FormatError(f"{path}:{lineno}: expected 65 columns, found {len(row)}")
            try:
                values = [int(v) for v in row]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-integer field ({exc})") from None
            pixels, label = values[:64], values[64]
            if min(pixels) < 0 or max(pixels) > 16:
                raise FormatError(f"{path}:{lineno}: feature outside [0, 16]")
            if not 0 <= label <= 9:
                raise FormatError(f"{path}:{lineno}: label {label} outside [0, 9]")
            rows.append(pixels)
            labels.append(label)
    features = np.array(rows, dtype=float).reshape(-1, 64) / 16.0
    return Dataset(features, np.array(labels, dtype=np.int64), 10)


def load_digits_csv(train_path, test_path) -> tuple[Dataset, Dataset]:
    return _read_digits_csv(train_path), _read_digits_csv(test_path)


def load_bundled_digits() -> tuple[Dataset, Dataset]:
    """The packaged 8x8 DIGITS train/test split."""
    root = resources.files("dpdropout") / "data"
    with resources.as_file(root / "digits_train.csv") as tr, resources.as_file(
        root / "digits_test.csv"
    ) as te:
        train, test = load_digits_csv(tr, te)
    sizes = (train.n_examples, test.n_examples)
    if sizes != BUNDLED_DIGITS_SIZES:
        raise FormatError(f"bundled DIGITS split has sizes {sizes}, expected {BUNDLED_DIGITS_SIZES}")
    return train, test


def sample_minibatch(dataset: Dataset, batch_size: int, rng: np.random.Generator) -> Minibatch:
    """``batch_size`` distinct rows drawn uniformly without replacement."""
    n = dataset.n_examples
    if not 1 <= batch_size <= n:
        raise ValueError(f"batch_size must be in [1, {n}], got {batch_size}")
    idx = rng.choice(n, size=batch_size, replace=False)
    return Minibatch(idx, dataset.features[idx], dataset.labels[idx])
