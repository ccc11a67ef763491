"""MNIST ingestion (IDX format), Split-MNIST contexts, batching and occlusion."""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
SIDE = 28
N_PIXELS = SIDE * SIDE

SPLIT_MNIST = ((0, 1), (2, 3), (4, 5), (6, 7), (8, 9))

DATA_DIR_ENV = "VAEMHN_DATA_DIR"
MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


class IDXError(ValueError):
    """Malformed or inconsistent IDX input."""


@dataclass
class ImageBatch:
    """Flattened 28x28 images in [0, 1] with integer labels."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 2:
            raise ValueError(f"images must be 2-D, got shape {self.images.shape}")
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError("image and label counts differ")

    def __len__(self):
        return self.images.shape[0]

    def subset(self, index):
        return ImageBatch(self.images[index], self.labels[index])


def _open(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx(path, expected_magic):
    """Read an unsigned-byte IDX file into a numpy array of its declared shape."""
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise IDXError(f"{path}: truncated header at offset 0")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise IDXError(f"{path}: bad magic number 0x{magic:08x} at offset 0 (expected 0x{expected_magic:08x})")
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise IDXError(f"{path}: truncated dimension header at offset 4")
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    n_bytes = int(np.prod(dims))
    if len(raw) - header_end < n_bytes:
        raise IDXError(
            f"{path}: truncated payload at offset {len(raw)} (need {header_end + n_bytes} bytes)"
        )
    if len(raw) - header_end > n_bytes:
        raise IDXError(f"{path}: trailing bytes after offset {header_end + n_bytes}")
    return np.frombuffer(raw, dtype=np.uint8, count=n_bytes, offset=header_end).reshape(dims)


def write_idx(path, array):
    """Write a uint8 array (1-D labels or 3-D images) as an IDX file; gzip if path ends in .gz."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    header = struct.pack(f">I{array.ndim}I", magic, *array.shape)
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wb") as fh:
        fh.write(header + array.tobytes())


def load_idx_pair(images_path, labels_path):
    images = read_idx(images_path, IMAGE_MAGIC)
    labels = read_idx(labels_path, LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise IDXError(
            f"{labels_path}: {labels.shape[0]} labels but {images_path} holds {images.shape[0]} images"
        )
    if labels.size and labels.max() > 9:
        raise IDXError(f"{labels_path}: label value {labels.max()} outside 0-9")
    return ImageBatch(images.reshape(images.shape[0], -1) / 255.0, labels)


def load_mnist(train_images_path, train_labels_path, test_images_path, test_labels_path):
    """Return ``(train, test)`` batches with pixels scaled to [0, 1]."""
    train = load_idx_pair(train_images_path, train_labels_path)
    test = load_idx_pair(test_images_path, test_labels_path)
    return train, test


def resolve_mnist_paths(data_dir=None):
    """Locate the four IDX files (optionally gzipped) in ``data_dir``.

    Falls back to the ``VAEMHN_DATA_DIR`` environment variable.
    """
    data_dir = data_dir or os.environ.get(DATA_DIR_ENV)
    if not data_dir:
        raise FileNotFoundError(f"no data directory given and {DATA_DIR_ENV} is unset")
    paths = {}
    for key, name in MNIST_FILES.items():
        for candidate in (Path(data_dir) / name, Path(data_dir) / f"{name}.gz"):
            if candidate.exists():
                paths[key] = candidate
                break
        else:
            raise FileNotFoundError(f"{name}[.gz] not found in {data_dir}")
    return paths


def load_mnist_dir(data_dir=None):
    p = resolve_mnist_paths(data_dir)
    return load_mnist(p["train_images"], p["train_labels"], p["test_images"], p["test_labels"])


def split_by_context(batch, context_index, protocol=SPLIT_MNIST):
    """Images whose label belongs to the given context's pair, original order kept."""
    pair = protocol[context_index]
    return batch.subset(np.isin(batch.labels, pair))


def iter_batches(batch, batch_size, rng):
    """Yield one shuffled epoch of mini-batches; the last batch may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = rng.permutation(len(batch))
    for start in range(0, len(batch), batch_size):
        yield batch.subset(order[start : start + batch_size])


@dataclass(frozen=True)
class Occlusion:
    """Square black patch; the default is the centred 10x10 block at rows/cols 9-18."""

    height: int = 10
    width: int = 10
    fill: float = 0.0

    @property
    def top(self):
        return (SIDE - self.height + 1) // 2

    @property
    def left(self):
        return (SIDE - self.width + 1) // 2

    def apply(self, images):
        images = np.array(images, dtype=np.float64, copy=True)
        squares = images.reshape(-1, SIDE, SIDE)
        squares[:, self.top : self.top + self.height, self.left : self.left + self.width] = self.fill
        return squares.reshape(images.shape)


def occlude(batch, spec=Occlusion()):
    if batch.images.shape[1] != N_PIXELS:
        raise ValueError("occlusion requires flattened 28x28 images")
    return ImageBatch(spec.apply(batch.images), batch.labels.copy())


def first_n_per_class(batch, n, classes=range(10)):
    """Indices of the first ``n`` images of each class, in dataset order."""
    out = {}
    for c in classes:
        idx = np.flatnonzero(batch.labels == c)
        if idx.size < n:
            raise ValueError(f"class {c} has {idx.size} images, need {n}")
        out[c] = idx[:n]
    return out
