"""Kernels over activity and labels, empirical centering, and the dependence estimators.

Activity kernels: linear ``a.b``, cosine similarity ``a.b/(|a||b|)``, and
Gaussian ``exp(-|a-b|^2 / 2 sigma^2)``.  When a :class:`KernelSpec` carries a
:class:`GroupingSpec`, the kernel is evaluated on the grouped response
vector ``v`` (smoothed group variances, exponentiated and centered across
groups) instead of the raw activity; the ``v`` computation itself lives in
:mod:`phsic.network` and is the single source of truth.

Both dependence estimators are the biased V-statistic forms, diagonal terms
included, because the analytic weight updates are derived from exactly these
forms.  For kernel matrices A, B of batch size m:

    paired(A, B)   = mean_ij(A_ij B_ij) - mean(A) mean(B)
    unpaired(A, B) = mean_ij(A_ij B_ij) + mean(A) mean(B)
                     - (2/m^3) sum_k (sum_i A_ik)(sum_j B_jk)

``paired`` (the two-point estimator) upper-bounds ``unpaired`` when A == B.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DimensionError, KernelError


class KernelFamily(str, Enum):
    LINEAR = "linear"
    COSINE = "cossim"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class GroupingSpec:
    """Partition of a layer into equal contiguous groups.

    group_count: number of groups; must divide the layer width.
    exponent_p: variance exponent in [0, 1); group feature is u^(1-p).
    smoothing_delta: positive offset added to each group variance.
    divisive_normalization: whether the next layer sees z_centered / u^p.
    """

    group_count: int
    exponent_p: float = 0.2
    smoothing_delta: float = 1.0
    divisive_normalization: bool = True

    def __post_init__(self):
        if self.group_count < 1:
            raise KernelError(f"group_count must be >= 1, got {self.group_count}")
        if not 0.0 <= self.exponent_p < 1.0:
            raise KernelError(f"exponent_p must lie in [0, 1), got {self.exponent_p}")
        if self.smoothing_delta <= 0.0:
            raise KernelError(
                f"smoothing_delta must be positive, got {self.smoothing_delta}"
            )

    def members_per_group(self, width: int) -> int:
        if width % self.group_count != 0:
            raise KernelError(
                f"group_count {self.group_count} does not divide width {width}"
            )
        return width // self.group_count


@dataclass(frozen=True)
class KernelSpec:
    family: KernelFamily
    sigma: float | None = None
    grouping: GroupingSpec | None = None

    def __post_init__(self):
        if self.family is KernelFamily.GAUSSIAN:
            if self.sigma is None or self.sigma <= 0.0:
                raise KernelError(f"Gaussian kernel needs sigma > 0, got {self.sigma}")

    @staticmethod
    def linear(grouping: GroupingSpec | None = None) -> "KernelSpec":
        return KernelSpec(KernelFamily.LINEAR, None, grouping)

    @staticmethod
    def cosine(grouping: GroupingSpec | None = None) -> "KernelSpec":
        return KernelSpec(KernelFamily.COSINE, None, grouping)

    @staticmethod
    def gaussian(sigma: float, grouping: GroupingSpec | None = None) -> "KernelSpec":
        return KernelSpec(KernelFamily.GAUSSIAN, float(sigma), grouping)


@dataclass
class KernelMatrix:
    """Symmetric kernel matrix with its empirical centering."""

    values: np.ndarray
    mean: float
    centered: np.ndarray

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @staticmethod
    def from_values(values: np.ndarray) -> "KernelMatrix":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DimensionError(f"kernel matrix must be square, got {values.shape}")
        mean = float(values.mean())
        return KernelMatrix(values=values, mean=mean, centered=values - mean)


def pairwise_sqdist(x: np.ndarray) -> np.ndarray:
    """All-pairs squared Euclidean distances, clamped at 0 and symmetrized."""
    sq = np.einsum("ij,ij->i", x, x)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    d = 0.5 * (d + d.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def _row_normalize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    if np.any(norms == 0.0):
        raise KernelError("cosine similarity undefined for zero-norm input")
    return x / norms[:, None], norms


def _grouped_features(spec: KernelSpec, batch: np.ndarray) -> np.ndarray:
    # group_response lives in network; imported lazily to avoid a cycle
    from .network import group_response

    _, v, _ = group_response(batch, spec.grouping)
    return v


def kernel_eval(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> float:
    """Kernel value between two samples (grouped response first, if configured)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"kernel_eval: shapes {a.shape} vs {b.shape}")
    if spec.grouping is not None:
        a = _grouped_features(spec, a)
        b = _grouped_features(spec, b)
    if spec.family is KernelFamily.LINEAR:
        return float(a @ b)
    if spec.family is KernelFamily.COSINE:
        na = float(np.linalg.norm(a))
        nb = float(np.linalg.norm(b))
        if na == 0.0 or nb == 0.0:
            raise KernelError("cosine similarity undefined for zero-norm input")
        return float(a @ b / (na * nb))
    diff = a - b
    return float(np.exp(-(diff @ diff) / (2.0 * spec.sigma**2)))


def kernel_matrix(spec: KernelSpec, batch) -> KernelMatrix:
    """Kernel matrix over a batch (rows are samples)."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2:
        x = np.stack([np.asarray(row, dtype=np.float64) for row in batch])
    if x.shape[0] < 2:
        raise DimensionError(f"kernel_matrix needs batch size >= 2, got {x.shape[0]}")
    if spec.grouping is not None:
        x = _grouped_features(spec, x)
    if spec.family is KernelFamily.LINEAR:
        k = x @ x.T
        k = 0.5 * (k + k.T)
    elif spec.family is KernelFamily.COSINE:
        xn, _ = _row_normalize(x)
        k = xn @ xn.T
        k = 0.5 * (k + k.T)
        np.fill_diagonal(k, 1.0)
    else:
        k = np.exp(-pairwise_sqdist(x) / (2.0 * spec.sigma**2))
    return KernelMatrix.from_values(k)


def label_kernel(label_i: int, label_j: int, n_classes: int) -> float:
    """Balanced-class teaching signal: 1 if same class, else -1/(n-1).

    Equals the cosine similarity of mean-centered one-hot label vectors.
    """
    if n_classes < 2:
        raise KernelError(f"label_kernel needs n_classes >= 2, got {n_classes}")
    for lab in (label_i, label_j):
        if not 0 <= lab < n_classes:
            raise KernelError(f"label {lab} out of range [0, {n_classes})")
    if label_i == label_j:
        return 1.0
    return -1.0 / (n_classes - 1)


def label_kernel_unbalanced(label_i: int, label_j: int, class_probs) -> float:
    """Near-binary teaching signal for roughly balanced classes.

    Linear kernel of probability-centered one-hots:
    1{i == j} + sum_k p_k^2 - p_i - p_j.
    """
    p = np.asarray(class_probs, dtype=np.float64)
    for lab in (label_i, label_j):
        if not 0 <= lab < p.shape[0]:
            raise KernelError(f"label {lab} out of range [0, {p.shape[0]})")
    same = 1.0 if label_i == label_j else 0.0
    return float(same + (p @ p) - p[label_i] - p[label_j])


def label_kernel_matrix(labels, n_classes: int) -> KernelMatrix:
    """Teaching-signal matrix for an integer label batch."""
    lab = np.asarray(labels)
    if lab.ndim != 1:
        raise DimensionError(f"labels must be 1-D, got shape {lab.shape}")
    if n_classes < 2:
        raise KernelError(f"label_kernel needs n_classes >= 2, got {n_classes}")
    if lab.size and (lab.min() < 0 or lab.max() >= n_classes):
        raise KernelError(f"labels out of range [0, {n_classes})")
    same = lab[:, None] == lab[None, :]
    off = -1.0 / (n_classes - 1)
    return KernelMatrix.from_values(np.where(same, 1.0, off))


def _check_same_m(ka: KernelMatrix, kb: KernelMatrix):
    if ka.m != kb.m:
        raise DimensionError(f"kernel matrices disagree in size: {ka.m} vs {kb.m}")


def phsic_estimate(ka: KernelMatrix, kb: KernelMatrix) -> float:
    """Two-point (paired) dependence estimator."""
    _check_same_m(ka, kb)
    return float((ka.values * kb.values).mean() - ka.mean * kb.mean)


def hsic_estimate(ka: KernelMatrix, kb: KernelMatrix) -> float:
    """Three-term dependence estimator (cross term weighted 2/m^3)."""
    _check_same_m(ka, kb)
    m = ka.m
    term1 = float((ka.values * kb.values).mean())
    term2 = ka.mean * kb.mean
    cross = 2.0 / m**3 * float(ka.values.sum(axis=0) @ kb.values.sum(axis=0))
    return term1 + term2 - cross
