"""Dataset ingestion: IDX (MNIST family) and CIFAR-10 binary formats.

Loaders are strict: wrong magic numbers, truncated payloads, trailing
bytes, image/label count mismatches and ragged record streams each raise a
distinct error.  Images come out as float64 rows, normalized the way the
experiments expect ((x/255 - 0.5) / 0.5 for IDX; per-channel mean/std for
CIFAR-10).  The tool never downloads anything; paths are user-supplied.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DataFormatError,
    MagicNumberError,
    RecordSizeError,
    SampleCountError,
    TruncatedFileError,
)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3 * 1024 pixels
CIFAR_CHANNEL_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR_CHANNEL_STD = (0.247, 0.243, 0.261)


@dataclass
class Dataset:
    images: np.ndarray  # (samples, features) float64
    labels: np.ndarray  # (samples,) int64
    n_classes: int
    split: str = "train"

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise SampleCountError(
                f"{self.images.shape[0]} images vs {self.labels.shape[0]} labels"
            )
        if not np.all(np.isfinite(self.images)):
            raise DataFormatError("dataset contains non-finite pixel values")
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= self.n_classes):
            raise DataFormatError(
                f"labels outside [0, {self.n_classes}): "
                f"range {self.labels.min()}..{self.labels.max()}"
            )

    @property
    def n(self) -> int:
        return self.images.shape[0]


def _read_idx_header(data: bytes, path, expected_magic: int, n_dims: int):
    header_len = 4 * (1 + n_dims)
    if len(data) < header_len:
        raise TruncatedFileError(f"{path}: file shorter than its header")
    fields = struct.unpack(f">{1 + n_dims}I", data[:header_len])
    if fields[0] != expected_magic:
        raise MagicNumberError(
            f"{path}: magic 0x{fields[0]:08x}, expected 0x{expected_magic:08x}"
        )
    return fields[1:], data[header_len:]


def load_idx(images_path, labels_path, n_classes: int | None = None,
             split: str = "train") -> Dataset:
    """Parse an IDX image/label file pair into a normalized Dataset."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    img_data = images_path.read_bytes()
    (n, rows, cols), payload = _read_idx_header(
        img_data, images_path, IDX_IMAGE_MAGIC, 3)
    expected = n * rows * cols
    if len(payload) < expected:
        raise TruncatedFileError(
            f"{images_path}: {len(payload)} pixel bytes, expected {expected}"
        )
    if len(payload) > expected:
        raise DataFormatError(
            f"{images_path}: {len(payload) - expected} trailing bytes"
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(n, rows * cols)

    lab_data = labels_path.read_bytes()
    (n_labels,), lab_payload = _read_idx_header(
        lab_data, labels_path, IDX_LABEL_MAGIC, 1)
    if len(lab_payload) < n_labels:
        raise TruncatedFileError(
            f"{labels_path}: {len(lab_payload)} label bytes, expected {n_labels}"
        )
    if len(lab_payload) > n_labels:
        raise DataFormatError(
            f"{labels_path}: {len(lab_payload) - n_labels} trailing bytes"
        )
    if n_labels != n:
        raise SampleCountError(f"{n} images but {n_labels} labels")
    labels = np.frombuffer(lab_payload, dtype=np.uint8).astype(np.int64)

    images = (pixels.astype(np.float64) / 255.0 - 0.5) / 0.5
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if labels.size else 0
    return Dataset(images=images, labels=labels, n_classes=n_classes, split=split)


def load_cifar10_binary(paths, split: str = "train") -> Dataset:
    """Parse CIFAR-10 binary batch files (3073-byte records), normalized
    per channel; no augmentation here (that is a training-time option)."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    all_labels, all_pixels = [], []
    for path in map(Path, paths):
        data = path.read_bytes()
        if len(data) == 0 or len(data) % CIFAR_RECORD_BYTES != 0:
            raise RecordSizeError(
                f"{path}: {len(data)} bytes is not a whole number of "
                f"{CIFAR_RECORD_BYTES}-byte records"
            )
        records = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        labels = records[:, 0].astype(np.int64)
        if labels.max(initial=0) > 9:
            raise DataFormatError(f"{path}: label byte > 9")
        all_labels.append(labels)
        all_pixels.append(records[:, 1:])
    labels = np.concatenate(all_labels)
    pixels = np.concatenate(all_pixels).astype(np.float64) / 255.0
    mean = np.repeat(CIFAR_CHANNEL_MEAN, 1024)
    std = np.repeat(CIFAR_CHANNEL_STD, 1024)
    images = (pixels - mean) / std
    return Dataset(images=images, labels=labels, n_classes=10, split=split)


def augment_cifar_batch(images: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Pad-4 / random-crop-32 / horizontal-flip(p=.5) on normalized rows.

    Padding uses each channel's normalized black level, equivalent to
    zero-padding raw pixels before normalization.
    """
    m = images.shape[0]
    imgs = images.reshape(m, 3, 32, 32)
    pad_value = (0.0 - np.asarray(CIFAR_CHANNEL_MEAN)) / np.asarray(CIFAR_CHANNEL_STD)
    padded = np.empty((m, 3, 40, 40))
    padded[:] = pad_value[None, :, None, None]
    padded[:, :, 4:36, 4:36] = imgs
    offsets = rng.integers(0, 9, size=(m, 2))
    flips = rng.random(m) < 0.5
    out = np.empty_like(imgs)
    for i in range(m):
        dy, dx = offsets[i]
        crop = padded[i, :, dy:dy + 32, dx:dx + 32]
        out[i] = crop[:, :, ::-1] if flips[i] else crop
    return out.reshape(m, 3072)
