"""Shared fixtures: independent binary fixture writers and tiny data helpers.

The IDX/CIFAR writers below are deliberately independent of the package's
loaders (plain struct packing, no shared constants) so loader tests compare
against bytes produced by a second implementation.
"""

import struct

import numpy as np
import pytest

from phsic.numerics import make_rng


def write_idx_images(path, images_uint8):
    """images_uint8: (n, rows, cols) uint8 array -> big-endian IDX file."""
    arr = np.asarray(images_uint8, dtype=np.uint8)
    n, rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        fh.write(arr.tobytes())
    return path


def write_idx_labels(path, labels_uint8):
    arr = np.asarray(labels_uint8, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, arr.shape[0]))
        fh.write(arr.tobytes())
    return path


def write_cifar_batch(path, labels_uint8, pixels_uint8):
    """labels: (n,), pixels: (n, 3072) -> 3073-byte-record binary file."""
    labels = np.asarray(labels_uint8, dtype=np.uint8)
    pixels = np.asarray(pixels_uint8, dtype=np.uint8)
    with open(path, "wb") as fh:
        for lab, pix in zip(labels, pixels):
            fh.write(bytes([lab]) + pix.tobytes())
    return path


@pytest.fixture
def idx_pair(tmp_path):
    """A tiny deterministic IDX image/label pair on disk."""
    rng = make_rng(123)
    images = rng.integers(0, 256, size=(8, 28, 28)).astype(np.uint8)
    labels = rng.integers(0, 10, size=8).astype(np.uint8)
    img_path = write_idx_images(tmp_path / "images.idx", images)
    lab_path = write_idx_labels(tmp_path / "labels.idx", labels)
    return img_path, lab_path, images, labels


def blob_dataset(rng, n_samples, dim, n_classes, noise=0.3):
    """Linearly separable gaussian blobs for quick learning checks."""
    centers = rng.normal(size=(n_classes, dim))
    labels = rng.integers(0, n_classes, size=n_samples)
    images = centers[labels] + noise * rng.normal(size=(n_samples, dim))
    return images, labels


def synthetic_idx_dataset(tmp_path, seed=0, n_train=192, n_test=64,
                          n_classes=4, side=8):
    """Blob data rendered as IDX files (for CLI / trainer round-trips)."""
    rng = make_rng(seed)
    dim = side * side
    centers = rng.normal(size=(n_classes, dim))

    def render(n, tag):
        labels = rng.integers(0, n_classes, size=n)
        raw = centers[labels] + 0.25 * rng.normal(size=(n, dim))
        pixels = np.clip((raw * 0.2 + 0.5) * 255, 0, 255).astype(np.uint8)
        img = write_idx_images(tmp_path / f"{tag}-images.idx",
                               pixels.reshape(n, side, side))
        lab = write_idx_labels(tmp_path / f"{tag}-labels.idx",
                               labels.astype(np.uint8))
        return img, lab

    train = render(n_train, "train")
    test = render(n_test, "test")
    return train, test
