"""Dataset loading: IDX image/label files and synthetic generators."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .nn import EvalSet
from .rng import STREAM_DATA, stream

_IMAGE_MAGIC = 0x00000803
_LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    train: EvalSet
    test: EvalSet
    name: str
    input_dim: int
    num_classes: int


def _read_idx(path, expect_magic: int) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(4)
        if len(head) < 4:
            raise FormatError(f"{path}: truncated header")
        (magic,) = struct.unpack(">I", head)
        if magic != expect_magic:
            raise FormatError(
                f"{path}: magic 0x{magic:08x}, expected 0x{expect_magic:08x}"
            )
        ndim = magic & 0xFF
        raw = fh.read(4 * ndim)
        if len(raw) < 4 * ndim:
            raise FormatError(f"{path}: truncated dimension header")
        dims = struct.unpack(f">{ndim}I", raw)
        count = 1
        for d in dims:
            count *= d
        payload = fh.read(count)
        if len(payload) < count:
            raise FormatError(
                f"{path}: payload has {len(payload)} bytes, expected {count}"
            )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def _load_idx_pair(images_path, labels_path) -> EvalSet:
    images = _read_idx(images_path, _IMAGE_MAGIC)
    labels = _read_idx(labels_path, _LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"count mismatch: {images.shape[0]} images vs "
            f"{labels.shape[0]} labels"
        )
    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return EvalSet(inputs=flat, labels=labels.astype(np.int64))


def load_mnist(data_dir, name: str = "mnist") -> Dataset:
    """Load the four canonical IDX files from a directory.

    Works for any MNIST-layout dataset (Fashion-MNIST uses the same files).
    Pixels are scaled to [0, 1] and flattened.
    """
    paths = {
        "train_images": os.path.join(data_dir, "train-images-idx3-ubyte"),
        "train_labels": os.path.join(data_dir, "train-labels-idx1-ubyte"),
        "test_images": os.path.join(data_dir, "t10k-images-idx3-ubyte"),
        "test_labels": os.path.join(data_dir, "t10k-labels-idx1-ubyte"),
    }
    for key, p in paths.items():
        if not os.path.exists(p):
            raise FileNotFoundError(f"missing {key} file: {p}")
    train = _load_idx_pair(paths["train_images"], paths["train_labels"])
    test = _load_idx_pair(paths["test_images"], paths["test_labels"])
    return Dataset(
        train=train,
        test=test,
        name=name,
        input_dim=train.inputs.shape[1],
        num_classes=int(max(train.labels.max(), test.labels.max())) + 1,
    )


def make_synthetic(kind: str, n: int, dim: int, classes: int,
                   seed: int) -> Dataset:
    """Deterministic synthetic classification data.

    blobs: Gaussian clusters with unit radial standard deviation whose
    centers are rescaled so the closest pair sits exactly 4 sigma apart
    (separable in practice: pairwise Bayes error ~ Phi(-2 sqrt(dim))).
    two_moons: the classic interleaved half-circles (2 classes, first two
    coordinates; extra dims are zero).
    """
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if n < 2 * classes:
        raise ValueError(f"need at least {2 * classes} samples, got {n}")
    gen = stream(seed, STREAM_DATA, 0)
    labels = np.arange(n) % classes
    if kind == "blobs":
        if dim < 1:
            raise ValueError("blobs need dim >= 1")
        centers = gen.standard_normal((classes, dim))
        dists = np.sqrt(
            np.sum((centers[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        )
        dmin = np.min(dists[np.triu_indices(classes, k=1)])
        if dmin <= 0:
            centers = centers + 8.0 * np.eye(classes, dim)
            dists = np.sqrt(
                np.sum((centers[:, None, :] - centers[None, :, :]) ** 2, axis=2)
            )
            dmin = np.min(dists[np.triu_indices(classes, k=1)])
        centers *= 4.0 / dmin
        inputs = centers[labels] + gen.standard_normal((n, dim)) / np.sqrt(dim)
    elif kind == "two_moons":
        if classes != 2:
            raise ValueError("two_moons is a 2-class dataset")
        if dim < 2:
            raise ValueError("two_moons needs dim >= 2")
        t = gen.uniform(0.0, np.pi, size=n)
        xy = np.where(
            (labels == 0)[:, None],
            np.stack([np.cos(t), np.sin(t)], axis=1),
            np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1),
        )
        xy = xy + 0.1 * gen.standard_normal((n, 2))
        inputs = np.zeros((n, dim))
        inputs[:, :2] = xy
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    order = gen.permutation(n)
    inputs, labels = inputs[order], labels[order]
    n_test = max(1, n // 5)
    n_train = n - n_test
    return Dataset(
        train=EvalSet(inputs=inputs[:n_train], labels=labels[:n_train]),
        test=EvalSet(inputs=inputs[n_train:], labels=labels[n_train:]),
        name=kind,
        input_dim=dim,
        num_classes=classes,
    )


def take(ds: Dataset, n_train: int, n_test: int) -> Dataset:
    """Deterministic prefix subset of both splits (for quick profiles)."""
    tr = min(n_train, ds.train.inputs.shape[0])
    te = min(n_test, ds.test.inputs.shape[0])
    return Dataset(
        train=EvalSet(inputs=ds.train.inputs[:tr], labels=ds.train.labels[:tr]),
        test=EvalSet(inputs=ds.test.inputs[:te], labels=ds.test.labels[:te]),
        name=ds.name,
        input_dim=ds.input_dim,
        num_classes=ds.num_classes,
    )
