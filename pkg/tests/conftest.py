"""Shared fixtures.

The training-based suites need real digit images. When the environment
variable HYBRIDBOOT_MNIST_DIR points at the canonical MNIST IDX files
they are used; otherwise scikit-learn's bundled handwritten-digits images
(8x8, 1797 examples) are written out as IDX files so every test still
exercises the package's own loader.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np
import pytest

from hybridboot.data import Dataset, load_idx

MNIST_ENV = "HYBRIDBOOT_MNIST_DIR"
MNIST_TRAIN = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")


def write_idx_images(path, images_u8):
    """images_u8: (N, H, W) uint8, written in the big-endian IDX layout."""
    n, h, w = images_u8.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, n, h, w))
        fh.write(images_u8.astype(np.uint8).tobytes())


def write_idx_labels(path, labels_u8):
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, len(labels_u8)))
        fh.write(np.asarray(labels_u8, dtype=np.uint8).tobytes())


def _digits_as_u8():
    from sklearn.datasets import load_digits

    bunch = load_digits()
    # pixel values are 0..16; rescale to the 0..255 byte range
    images = np.round(bunch.images * (255.0 / 16.0)).astype(np.uint8)
    return images, bunch.target.astype(np.uint8)


@pytest.fixture(scope="session")
def digits_idx_dir(tmp_path_factory) -> Path:
    """Directory with train-images/-labels IDX files of real digit data."""
    env_dir = os.environ.get(MNIST_ENV)
    if env_dir and all((Path(env_dir) / name).exists() for name in MNIST_TRAIN):
        return Path(env_dir)
    out = tmp_path_factory.mktemp("digits-idx")
    images, labels = _digits_as_u8()
    write_idx_images(out / MNIST_TRAIN[0], images)
    write_idx_labels(out / MNIST_TRAIN[1], labels)
    return out


@pytest.fixture(scope="session")
def digits_pool(digits_idx_dir) -> Dataset:
    return load_idx(digits_idx_dir / MNIST_TRAIN[0], digits_idx_dir / MNIST_TRAIN[1])


@pytest.fixture()
def tiny_csv(tmp_path) -> Path:
    path = tmp_path / "toy.csv"
    path.write_text(
        "age,fare,port,survived\n"
        "22,7.25,S,0\n"
        "38,71.2833,C,1\n"
        "26,7.925,S,1\n"
        "35,53.1,S,1\n"
        "28,8.4583,Q,0\n",
        encoding="utf-8",
    )
    return path
