"""Shared fixtures.

Heavy, full-scale checks (real MNIST at publication settings) only run when
PERMALIGN_SCALE=full and PERMALIGN_DATA_DIR points at the IDX files; the
default suite stays desk-scale. Trained checkpoints for the full-scale runs
are cached under PERMALIGN_CACHE_DIR (default: .cache/ next to the package)
keyed by their training settings, so repeated runs are cheap.
"""

import os

import numpy as np
import pytest

from permalign import data, nn
from permalign.rng import STREAM_FIXTURE, stream

SCALE = os.environ.get("PERMALIGN_SCALE", "desk")
DATA_DIR = os.environ.get("PERMALIGN_DATA_DIR")

_MNIST_FILES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)


def _has_mnist() -> bool:
    return bool(DATA_DIR) and all(
        os.path.exists(os.path.join(DATA_DIR, f)) for f in _MNIST_FILES
    )


full_scale = pytest.mark.skipif(
    SCALE != "full",
    reason="full-scale run only (set PERMALIGN_SCALE=full)",
)

needs_mnist = pytest.mark.skipif(
    not _has_mnist(),
    reason="PERMALIGN_DATA_DIR does not hold the four MNIST IDX files",
)


def cache_dir() -> str:
    path = os.environ.get(
        "PERMALIGN_CACHE_DIR",
        os.path.join(os.path.dirname(__file__), os.pardir, ".cache"),
    )
    os.makedirs(path, exist_ok=True)
    return path


def random_model(layer_dims, seed, scale=1.0) -> nn.ModelParams:
    """Gaussian-weight model for fixtures; not an init scheme."""
    gen = stream(seed, STREAM_FIXTURE)
    weights = [
        np.asarray(gen.standard_normal((o, i)) * scale / np.sqrt(i))
        for i, o in zip(layer_dims[:-1], layer_dims[1:])
    ]
    biases = [
        np.asarray(gen.standard_normal(o) * 0.1 * scale)
        for o in layer_dims[1:]
    ]
    return nn.ModelParams(weights=weights, biases=biases)


@pytest.fixture(scope="session")
def blobs_small():
    return data.make_synthetic("blobs", 900, 10, 3, seed=11)


@pytest.fixture(scope="session")
def trained_pair(blobs_small):
    """Two width-10 depth-3 models trained on the same blobs split."""
    ds = blobs_small
    dims = [ds.input_dim, 10, 10, ds.num_classes]
    cfg_a = nn.TrainConfig(epochs=20, batch_size=128, seed=3)
    cfg_b = nn.TrainConfig(epochs=20, batch_size=128, seed=4)
    a = nn.train(dims, cfg_a, ds.train.inputs, ds.train.labels)
    b = nn.train(dims, cfg_b, ds.train.inputs, ds.train.labels)
    return a, b, ds
