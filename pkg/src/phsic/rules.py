"""Layer-local weight gradients, the two-point Hebbian rule, and baselines.

Each hidden layer minimizes its own objective

    paired(Kz, Kz) - gamma * paired(Ky, Kz)

with respect to that layer's weights only, treating the layer input as
given.  The gradient of this objective over a batch of m samples is

    (1/m^2) sum_ij [2 Kz_c(i,j) - gamma Ky_c(i,j)] * d k(z_i, z_j) / dW

(`_c` = empirically centered).  Exploiting the symmetry of the pair
coefficients, every kernel family collapses to the same per-sample form

    grad = (2/m^2) * A^T X,   A[i] = (sum_j coeff_ij * dk_ij/dfeature_i) -> chain to W

where X is the layer's actual input batch.  The feature is the raw
activity z for plain kernels and the grouped response v when grouping is
configured, in which case the chain rule routes through the smoothed group
variance and contributes the divisive-normalization factor z_centered/u^p.

Sign convention: callers descend, W <- W - lr * gradient.  The two-point
update returns the *descent* direction of a single symmetric pair without
the 2/m^2 prefactor, so for an m=2 batch
``layer_gradient == -(2/m^2) * two_point_update.delta_w`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import KernelError, StateError
from .kernels import (
    KernelFamily,
    KernelMatrix,
    KernelSpec,
    kernel_matrix,
    label_kernel_matrix,
    phsic_estimate,
    _row_normalize,
)
from .network import Network, LayerState, group_response, lrelu, softmax_cross_entropy


@dataclass(frozen=True)
class UpdateConfig:
    gamma: float
    learning_rate: float
    kernel: KernelSpec

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise KernelError(f"gamma must be positive, got {self.gamma}")


@dataclass
class ThirdFactor:
    """Pair-specific modulatory signal of the Gaussian-family rules.

    teaching_term = gamma * centered label similarity (global part),
    activity_term = 2 * centered activity similarity (local part).
    The modulator is -(teaching - activity) * kernel / sigma^2; grouped
    rules additionally scale it by each group's response difference.
    """

    i: int
    j: int
    teaching_term: float
    activity_term: float
    kernel_value: float
    sigma: float
    group_diff: np.ndarray | None = None

    @property
    def scalar(self) -> float:
        return (
            -(self.teaching_term - self.activity_term)
            * self.kernel_value
            / self.sigma**2
        )

    def per_group(self) -> np.ndarray:
        if self.group_diff is None:
            raise StateError("third factor has no per-group component")
        return self.scalar * self.group_diff


def _base_spec(spec: KernelSpec) -> KernelSpec:
    return KernelSpec(spec.family, spec.sigma, None)


def _features(spec: KernelSpec, z: np.ndarray) -> np.ndarray:
    if spec.grouping is None:
        return z
    _, v, _ = group_response(z, spec.grouping)
    return v


def objective_value(spec: KernelSpec, batch_z, labels, n_classes: int,
                    gamma: float) -> float:
    """paired(Kz,Kz) - gamma * paired(Ky,Kz) over one batch of activations."""
    kz = kernel_matrix(spec, batch_z)
    ky = label_kernel_matrix(labels, n_classes)
    return phsic_estimate(kz, kz) - gamma * phsic_estimate(ky, kz)


def pair_coefficients(kz: KernelMatrix, ky: KernelMatrix, gamma: float) -> np.ndarray:
    return 2.0 * kz.centered - gamma * ky.centered


def _feature_error_signal(spec: KernelSpec, coeff: np.ndarray,
                          feats: np.ndarray, kz: KernelMatrix) -> np.ndarray:
    """E[i] = sum_j coeff_ij * d k(f_i, f_j) / d f_i, vectorized per family."""
    if spec.family is KernelFamily.LINEAR:
        return coeff @ feats
    if spec.family is KernelFamily.GAUSSIAN:
        ck = coeff * kz.values
        return (ck @ feats - ck.sum(axis=1, keepdims=True) * feats) / spec.sigma**2
    fn, norms = _row_normalize(feats)
    ck = coeff * kz.values
    return (coeff @ fn - ck.sum(axis=1, keepdims=True) * fn) / norms[:, None]


def _gradient_terms(spec: KernelSpec, layer: LayerState, labels,
                    n_classes: int, gamma: float, x: np.ndarray):
    z = layer.z
    m = z.shape[0]
    grouping = spec.grouping
    if grouping is None:
        feats = z
    else:
        if layer.v is None:
            raise StateError("layer cache has no grouped response")
        feats = layer.v
    kz = kernel_matrix(_base_spec(spec), feats)
    ky = label_kernel_matrix(labels, n_classes)
    coeff = pair_coefficients(kz, ky, gamma)
    err = _feature_error_signal(spec, coeff, feats, kz)
    if grouping is None:
        a = err * layer.g
    else:
        members = grouping.members_per_group(z.shape[1])
        err = err - err.mean(axis=1, keepdims=True)
        scale = 2.0 * (1.0 - grouping.exponent_p) / members
        a = np.repeat(err, members, axis=1) * layer.r * layer.g * scale
    grad = (2.0 / m**2) * (a.T @ x)
    return grad, phsic_estimate(kz, kz), phsic_estimate(ky, kz)


def layer_gradient(spec: KernelSpec, layer: LayerState, labels,
                   n_classes: int, gamma: float,
                   prev_activity: np.ndarray | None = None) -> np.ndarray:
    """Exact gradient of the layer objective w.r.t. this layer's weights.

    Uses the cached forward quantities; ``prev_activity`` defaults to the
    input batch the layer actually saw.
    """
    layer.require_cache()
    x = layer.inputs if prev_activity is None else np.asarray(prev_activity)
    grad, _, _ = _gradient_terms(spec, layer, labels, n_classes, gamma, x)
    return grad


def layer_gradient_with_objectives(spec, layer, labels, n_classes, gamma):
    """Gradient plus the two objective terms (activity-activity, label-activity)."""
    layer.require_cache()
    return _gradient_terms(spec, layer, labels, n_classes, gamma, layer.inputs)


def pair_delta_w(
    spec: KernelSpec,
    z_i, z_j, g_i, g_j, x_i, x_j,
    label_similarity: float,
    gamma: float,
    mean_y: float,
    mean_z: float,
    v_i=None, v_j=None, r_i=None, r_j=None,
    pair=(0, 1),
):
    """Descent update for one symmetric sample pair (Gaussian family).

    Plain:    dW = M * (z_i - z_j) outer (g_i x_i - g_j x_j)
    Grouped:  dW[group a] = (2(1-p)/c) * M_a * (r_i g_i x_i - r_j g_j x_j)
    with M the third factor built from the externally supplied centering
    means.  Returns (dW, ThirdFactor).
    """
    if spec.family is not KernelFamily.GAUSSIAN:
        raise KernelError("two-point rule is defined for the Gaussian family")
    sigma = spec.sigma
    grouping = spec.grouping
    if grouping is None:
        diff = z_i - z_j
        kval = float(np.exp(-(diff @ diff) / (2.0 * sigma**2)))
        tf = ThirdFactor(
            i=pair[0], j=pair[1],
            teaching_term=gamma * (label_similarity - mean_y),
            activity_term=2.0 * (kval - mean_z),
            kernel_value=kval, sigma=sigma,
        )
        dw = tf.scalar * diff[:, None] * (
            g_i[:, None] * x_i[None, :] - g_j[:, None] * x_j[None, :]
        )
        return dw, tf
    if v_i is None or r_i is None:
        raise StateError("grouped two-point rule needs v and r caches")
    dv = v_i - v_j
    kval = float(np.exp(-(dv @ dv) / (2.0 * sigma**2)))
    tf = ThirdFactor(
        i=pair[0], j=pair[1],
        teaching_term=gamma * (label_similarity - mean_y),
        activity_term=2.0 * (kval - mean_z),
        kernel_value=kval, sigma=sigma,
        group_diff=dv,
    )
    members = g_i.shape[0] // grouping.group_count
    scale = 2.0 * (1.0 - grouping.exponent_p) / members
    m_per_neuron = np.repeat(tf.per_group(), members)
    dw = scale * m_per_neuron[:, None] * (
        (r_i * g_i)[:, None] * x_i[None, :] - (r_j * g_j)[:, None] * x_j[None, :]
    )
    return dw, tf


def two_point_update(spec: KernelSpec, layer: LayerState, pair,
                     label_similarity: float, gamma: float,
                     mean_y: float, mean_z: float):
    """Two-sample Hebbian update from a layer's cached batch (Gaussian family)."""
    layer.require_cache()
    i, j = pair
    kw = {}
    if spec.grouping is not None:
        kw = dict(v_i=layer.v[i], v_j=layer.v[j], r_i=layer.r[i], r_j=layer.r[j])
    return pair_delta_w(
        spec,
        layer.z[i], layer.z[j], layer.g[i], layer.g[j],
        layer.inputs[i], layer.inputs[j],
        label_similarity, gamma, mean_y, mean_z,
        pair=(i, j), **kw,
    )


def backprop_gradients(net: Network, x: np.ndarray, labels,
                       mode: str = "eval", rng=None):
    """Chain-rule gradients of the mean cross-entropy for a plain network.

    Returns (per-layer weight grads, (readout W grad, bias grad), loss).
    Grouped/divisive-normalization networks are out of the baseline's scope.
    """
    for layer in net.layers:
        if layer.grouping is not None:
            raise StateError("backprop baseline supports plain networks only")
    out = net.forward(x, mode=mode, rng=rng)
    logits = net.logits(out)
    loss, probs = softmax_cross_entropy(logits, labels)
    m, n_classes = probs.shape
    labels = np.asarray(labels)
    dlogits = probs.copy()
    dlogits[np.arange(m), labels] -= 1.0
    dlogits /= m
    g_wout = dlogits.T @ out
    g_bias = dlogits.sum(axis=0)
    delta = dlogits @ net.readout.W
    layer_grads = [None] * len(net.layers)
    for idx in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[idx]
        if layer.mask is not None:
            delta = delta * layer.mask
        da = delta * layer.g
        layer_grads[idx] = da.T @ layer.inputs
        if idx > 0:
            delta = da @ layer.W
    return layer_grads, (g_wout, g_bias), loss


def finite_difference_gradient(f, w: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Entry-wise central differences (f(W+h) - f(W-h)) / 2h."""
    if step <= 0.0:
        raise ValueError(f"step must be positive, got {step}")
    w = np.array(w, dtype=np.float64)
    grad = np.zeros_like(w)
    it = np.nditer(w, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = w[idx]
        w[idx] = orig + step
        f_plus = f(w)
        w[idx] = orig - step
        f_minus = f(w)
        w[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * step)
    return grad


def layer_objective_fn(spec: KernelSpec, layer: LayerState, labels,
                       n_classes: int, gamma: float, slope: float):
    """Objective as a function of this layer's W with its input held fixed.

    This is the reference the finite-difference oracle differentiates.
    """
    layer.require_cache()
    x = layer.inputs.copy()

    def objective(w):
        z = lrelu(x @ w.T, slope)
        return objective_value(spec, z, labels, n_classes, gamma)

    return objective


def gradient_check(spec: KernelSpec, net: Network, x, labels, n_classes: int,
                   gamma: float, step: float = 1e-6):
    """Compare analytic layer gradients against central differences.

    Returns a list of (max_rel_err, max_abs_small_err) per hidden layer,
    where entries with |oracle| < 1e-8 contribute to the absolute column.
    """
    net.forward(x, mode="eval")
    slope = net.config.nonlinearity_slope
    report = []
    for layer in net.layers:
        analytic = layer_gradient(spec, layer, labels, n_classes, gamma)
        oracle = finite_difference_gradient(
            layer_objective_fn(spec, layer, labels, n_classes, gamma, slope),
            layer.W, step,
        )
        small = np.abs(oracle) < 1e-8
        rel = np.zeros_like(oracle)
        if np.any(~small):
            rel[~small] = np.abs(analytic[~small] - oracle[~small]) / np.abs(oracle[~small])
        abs_err = np.abs(analytic[small] - oracle[small]) if np.any(small) else np.zeros(1)
        report.append((float(rel.max()), float(abs_err.max(initial=0.0))))
    return report
