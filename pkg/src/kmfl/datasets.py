"""IDX tensor parsing, digit filtering, and synthetic datasets.

The IDX container is big-endian: a 4-byte magic (0x00000803 for u8 images,
0x00000801 for u8 labels), one 32-bit size per dimension, then the raw
payload.  Parsing is bit-exact and rejects both missing and trailing bytes;
serializers reproduce parsed inputs byte for byte.  Files may be gzip
compressed, detected by the 0x1f 0x8b prefix.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DimensionMismatchError,
    ParameterError,
    TrailingBytesError,
    TruncatedPayloadError,
)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Feature rows in [0,1] with one-hot label rows."""

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        z = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.float64)
        if z.ndim != 2 or y.ndim != 2:
            raise DimensionMismatchError("features and labels must be 2-d arrays")
        if z.shape[0] != y.shape[0]:
            raise DimensionMismatchError(
                f"{z.shape[0]} feature rows vs {y.shape[0]} label rows"
            )
        if z.size and (z.min() < 0.0 or z.max() > 1.0):
            raise ParameterError("features must lie in [0, 1]")
        if y.size:
            if not np.isin(y, (0.0, 1.0)).all() or not (y.sum(axis=1) == 1.0).all():
                raise ParameterError("each label row must be one-hot")
        z = z.copy(); z.setflags(write=False)
        y = y.copy(); y.setflags(write=False)
        object.__setattr__(self, "features", z)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def d_in(self) -> int:
        return self.features.shape[1]

    @property
    def d_out(self) -> int:
        return self.labels.shape[1]


def _parse_header(data: bytes, magic: int, n_dims: int, what: str):
    header = 4 * (1 + n_dims)
    if len(data) < header:
        raise TruncatedPayloadError(f"{what}: {len(data)} bytes is too short for the header")
    fields = struct.unpack(f">{1 + n_dims}I", data[:header])
    if fields[0] != magic:
        raise BadMagicError(f"{what}: magic 0x{fields[0]:08x}, expected 0x{magic:08x}")
    return fields[1:], data[header:]


def parse_idx_images(data: bytes) -> np.ndarray:
    """(K, rows, cols) u8 tensor from IDX image bytes."""
    (k, rows, cols), payload = _parse_header(data, IMAGE_MAGIC, 3, "images")
    expected = k * rows * cols
    if len(payload) < expected:
        raise TruncatedPayloadError(f"images: payload {len(payload)} bytes, expected {expected}")
    if len(payload) > expected:
        raise TrailingBytesError(
            f"images: {len(payload) - expected} trailing bytes after {expected}-byte payload"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(k, rows, cols)


def parse_idx_labels(data: bytes) -> np.ndarray:
    """(K,) u8 vector from IDX label bytes."""
    (k,), payload = _parse_header(data, LABEL_MAGIC, 1, "labels")
    if len(payload) < k:
        raise TruncatedPayloadError(f"labels: payload {len(payload)} bytes, expected {k}")
    if len(payload) > k:
        raise TrailingBytesError(f"labels: {len(payload) - k} trailing bytes after {k}-byte payload")
    return np.frombuffer(payload, dtype=np.uint8).copy()


def images_to_idx_bytes(images: np.ndarray) -> bytes:
    arr = np.asarray(images, dtype=np.uint8)
    if arr.ndim != 3:
        raise DimensionMismatchError(f"images must be K x rows x cols, got {arr.shape}")
    return struct.pack(">4I", IMAGE_MAGIC, *arr.shape) + arr.tobytes()


def labels_to_idx_bytes(labels: np.ndarray) -> bytes:
    arr = np.asarray(labels, dtype=np.uint8)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"labels must be a vector, got {arr.shape}")
    return struct.pack(">2I", LABEL_MAGIC, arr.shape[0]) + arr.tobytes()


def read_idx_file(path: str | Path) -> bytes:
    """Raw IDX bytes from a file, transparently gunzipping if needed."""
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def filter_binary_classes(
    images: np.ndarray,
    labels: np.ndarray,
    class_a: int = 4,
    class_b: int = 6,
    max_k: int | None = None,
    seed: int = 0,
) -> Dataset:
    """Keep two digit classes, scale pixels to [0,1], flatten, one-hot label.

    Label (1,0) marks ``class_a`` and (0,1) marks ``class_b``.  Row order is
    preserved; if more than ``max_k`` rows survive, a seeded uniform sample
    without replacement is taken (and re-sorted to keep the original order).
    """
    imgs = np.asarray(images)
    labs = np.asarray(labels)
    if imgs.ndim != 3 or labs.ndim != 1 or imgs.shape[0] != labs.shape[0]:
        raise DimensionMismatchError(
            f"images {imgs.shape} and labels {labs.shape} are inconsistent"
        )
    keep = np.flatnonzero((labs == class_a) | (labs == class_b))
    if max_k is not None and keep.size > max_k:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(keep, size=max_k, replace=False))
    selected = imgs[keep].reshape(keep.size, -1).astype(np.float64) / 255.0
    onehot = np.zeros((keep.size, 2))
    onehot[labs[keep] == class_a, 0] = 1.0
    onehot[labs[keep] == class_b, 1] = 1.0
    return Dataset(selected, onehot, (str(class_a), str(class_b)))


def synthetic_dataset(k: int, d_in: int, rule: str = "linear", seed: int = 0) -> Dataset:
    """Uniform features in [0,1]^d_in, one-hot labels from a linear rule.

    The rule is sign(w . z - w . 1/2) with w drawn from the seed; the
    threshold is the median of w . z, so classes are balanced in
    expectation.  Deterministic in the seed.
    """
    if rule != "linear":
        raise ParameterError(f"unknown labelling rule {rule!r}")
    if k < 0 or d_in < 1:
        raise ParameterError(f"need k >= 0 and d_in >= 1, got k={k}, d_in={d_in}")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(d_in)
    z = rng.random((k, d_in))
    score = z @ w - 0.5 * w.sum()
    y = np.zeros((k, 2))
    y[score >= 0, 0] = 1.0
    y[score < 0, 1] = 1.0
    return Dataset(z, y, ("positive", "negative"))


def dataset_to_csv(ds: Dataset, path: str | Path) -> None:
    """CSV export with columns feature_0,...,label_0,..."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = [f"feature_{j}" for j in range(ds.d_in)] + [f"label_{j}" for j in range(ds.d_out)]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(ds.size):
            row = [repr(float(v)) for v in ds.features[i]] + [
                repr(float(v)) for v in ds.labels[i]
            ]
            fh.write(",".join(row) + "\n")


def load_mnist_pair(images_path: str | Path, labels_path: str | Path):
    """Parse an images/labels IDX file pair (possibly gzipped)."""
    images = parse_idx_images(read_idx_file(images_path))
    labels = parse_idx_labels(read_idx_file(labels_path))
    if images.shape[0] != labels.shape[0]:
        raise DimensionMismatchError(
            f"{images.shape[0]} images vs {labels.shape[0]} labels"
        )
    return images, labels
