"""Independent reference implementations used for gradient checking.

Everything here is deliberately written the slow way: explicit loops over
sample pairs, no shared code with the production kernels or update rules,
and extended precision so that central finite differences at step 1e-6 are
limited by truncation rather than cancellation.  Long double covers entries
of ordinary magnitude; entries whose difference quotient lands in
[1e-8, 1e-6) are re-evaluated with mpmath (40 digits), below which the
oracle noise floor would otherwise dominate the relative comparison.
"""

from __future__ import annotations

import numpy as np

from .kernels import KernelFamily, KernelSpec
from .network import Network
from .numerics import make_rng

LD = np.longdouble

REFINE_BELOW = 1e-6  # |difference quotient| under this -> mpmath oracle
SMALL_ORACLE = 1e-8  # under this the comparison is absolute, not relative


def _lrelu_ref(a, slope):
    return np.where(a >= 0, a, slope * a)


def _group_feats_ref(z, group_count, exponent_p, delta):
    c = z.shape[0] // group_count
    u = np.empty(group_count, dtype=LD)
    for g in range(group_count):
        block = z[g * c:(g + 1) * c]
        centered = block - block.mean()
        u[g] = LD(delta) / c + (centered * centered).mean()
    powed = u ** (LD(1.0) - LD(exponent_p))
    return powed - powed.mean()


def _kernel_ref(spec: KernelSpec, a, b):
    if spec.family is KernelFamily.LINEAR:
        return np.dot(a, b)
    if spec.family is KernelFamily.COSINE:
        return np.dot(a, b) / (np.sqrt(np.dot(a, a)) * np.sqrt(np.dot(b, b)))
    diff = a - b
    return np.exp(-np.dot(diff, diff) / (2 * LD(spec.sigma) ** 2))


def reference_layer_objective(spec: KernelSpec, w, x, labels, n_classes: int,
                              gamma: float, slope: float):
    """Layer objective evaluated pair-by-pair in long double precision."""
    w = np.asarray(w, dtype=LD)
    x = np.asarray(x, dtype=LD)
    m = x.shape[0]
    feats = []
    for s in range(m):
        z = _lrelu_ref(w @ x[s], LD(slope))
        if spec.grouping is not None:
            g = spec.grouping
            z = _group_feats_ref(z, g.group_count, g.exponent_p, g.smoothing_delta)
        feats.append(z)
    off = LD(-1.0) / (n_classes - 1)
    sum_kz = LD(0.0)
    sum_kz2 = LD(0.0)
    sum_ky = LD(0.0)
    sum_kykz = LD(0.0)
    for i in range(m):
        for j in range(m):
            kz = _kernel_ref(spec, feats[i], feats[j])
            ky = LD(1.0) if labels[i] == labels[j] else off
            sum_kz += kz
            sum_kz2 += kz * kz
            sum_ky += ky
            sum_kykz += ky * kz
    mm = LD(m) * m
    phsic_zz = sum_kz2 / mm - (sum_kz / mm) ** 2
    phsic_yz = sum_kykz / mm - (sum_ky / mm) * (sum_kz / mm)
    return phsic_zz - LD(gamma) * phsic_yz


def _mp_layer_objective(spec: KernelSpec, w_rows, x_rows, labels, n_classes,
                        gamma, slope, mp):
    """Same objective as above on mpmath numbers (w_rows/x_rows: lists of mpf)."""
    one = mp.mpf(1)
    feats = []
    for xs in x_rows:
        z = []
        for row in w_rows:
            acc = mp.mpf(0)
            for wv, xv in zip(row, xs):
                acc += wv * xv
            z.append(acc if acc >= 0 else slope * acc)
        if spec.grouping is not None:
            g = spec.grouping
            c = len(z) // g.group_count
            powed = []
            for a in range(g.group_count):
                block = z[a * c:(a + 1) * c]
                mean = sum(block) / c
                var = sum((b - mean) ** 2 for b in block) / c
                u = mp.mpf(g.smoothing_delta) / c + var
                powed.append(u ** (one - mp.mpf(g.exponent_p)))
            pmean = sum(powed) / len(powed)
            z = [p - pmean for p in powed]
        feats.append(z)
    m = len(feats)
    off = mp.mpf(-1) / (n_classes - 1)

    def kval(a, b):
        if spec.family is KernelFamily.LINEAR:
            return sum(av * bv for av, bv in zip(a, b))
        if spec.family is KernelFamily.COSINE:
            dot = sum(av * bv for av, bv in zip(a, b))
            na = mp.sqrt(sum(av * av for av in a))
            nb = mp.sqrt(sum(bv * bv for bv in b))
            return dot / (na * nb)
        d = sum((av - bv) ** 2 for av, bv in zip(a, b))
        return mp.e ** (-d / (2 * mp.mpf(spec.sigma) ** 2))

    sum_kz = sum_kz2 = sum_ky = sum_kykz = mp.mpf(0)
    for i in range(m):
        for j in range(m):
            kz = kval(feats[i], feats[j])
            ky = one if labels[i] == labels[j] else off
            sum_kz += kz
            sum_kz2 += kz * kz
            sum_ky += ky
            sum_kykz += ky * kz
    mm = mp.mpf(m * m)
    return (sum_kz2 / mm - (sum_kz / mm) ** 2
            - mp.mpf(gamma) * (sum_kykz / mm - (sum_ky / mm) * (sum_kz / mm)))


def mp_central_difference_entry(spec: KernelSpec, w, x, labels, n_classes: int,
                                gamma: float, slope: float, idx,
                                step: float = 1e-6, dps: int = 40) -> float:
    """One FD entry with 40-digit arithmetic (for near-noise-floor entries)."""
    from mpmath import mp

    with mp.workdps(dps):
        x_rows = [[mp.mpf(float(v)) for v in row] for row in np.asarray(x)]
        labs = [int(v) for v in np.asarray(labels)]
        slope_mp = mp.mpf(float(slope))
        h = mp.mpf(step)
        vals = []
        for sign in (1, -1):
            w_rows = [[mp.mpf(float(v)) for v in row] for row in np.asarray(w)]
            w_rows[idx[0]][idx[1]] += sign * h
            vals.append(_mp_layer_objective(spec, w_rows, x_rows, labs,
                                            n_classes, gamma, slope_mp, mp))
        return float((vals[0] - vals[1]) / (2 * h))


def reference_cross_entropy(net: Network, x, labels):
    """Mean softmax cross-entropy via a long-double forward pass (no dropout)."""
    slope = LD(net.config.nonlinearity_slope)
    x = np.asarray(x, dtype=LD)
    labels = np.asarray(labels)
    total = LD(0.0)
    for s in range(x.shape[0]):
        h = x[s]
        for layer in net.layers:
            h = _lrelu_ref(np.asarray(layer.W, dtype=LD) @ h, slope)
        logits = np.asarray(net.readout.W, dtype=LD) @ h + np.asarray(
            net.readout.bias, dtype=LD)
        shifted = logits - logits.max()
        total += np.log(np.exp(shifted).sum()) - shifted[labels[s]]
    return total / x.shape[0]


def central_difference(f, w, step: float = 1e-6) -> np.ndarray:
    """Entry-wise (f(W+h) - f(W-h)) / 2h.

    The subtraction happens in whatever precision ``f`` returns; only the
    final quotient is cast to float64.
    """
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
        grad[idx] = float((f_plus - f_minus) / type(f_plus)(2.0 * step))
    return grad


def compare_gradients(analytic: np.ndarray, oracle: np.ndarray,
                      small: float = SMALL_ORACLE):
    """(max relative error, max absolute error on |oracle| < small entries)."""
    analytic = np.asarray(analytic)
    oracle = np.asarray(oracle)
    tiny = np.abs(oracle) < small
    rel = 0.0
    if np.any(~tiny):
        rel = float(
            (np.abs(analytic - oracle)[~tiny] / np.abs(oracle)[~tiny]).max()
        )
    abs_err = float(np.abs(analytic - oracle)[tiny].max(initial=0.0))
    return rel, abs_err


def oracle_layer_gradient(spec: KernelSpec, w, x, labels, n_classes: int,
                          gamma: float, slope: float,
                          step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of the reference objective.

    Long double everywhere; entries whose magnitude falls in
    [SMALL_ORACLE, REFINE_BELOW) are re-differenced with mpmath so the
    relative comparison is meaningful down to the absolute cutoff.
    """
    fd = central_difference(
        lambda ww: reference_layer_objective(
            spec, ww, x, labels, n_classes, gamma, slope),
        w, step,
    )
    mag = np.abs(fd)
    for idx in zip(*np.nonzero((mag >= SMALL_ORACLE) & (mag < REFINE_BELOW))):
        fd[idx] = mp_central_difference_entry(
            spec, w, x, labels, n_classes, gamma, slope, idx, step)
    return fd


def gradcheck_instance(spec: KernelSpec, grouping_per_layer, seed: int,
                       widths=(8, 6, 4), m: int = 5, n_classes: int = 3,
                       gamma: float = 2.0, step: float = 1e-6):
    """One random-net comparison; returns per-layer (rel, abs) error pairs.

    The oracle side is ``oracle_layer_gradient``; the analytic side is the
    production layer gradient from the cached forward pass.
    """
    from .network import NetworkConfig
    from .rules import layer_gradient

    rng = make_rng(seed)
    x = rng.normal(size=(m, widths[0]))
    labels = rng.integers(0, n_classes, size=m)
    config = NetworkConfig(widths, n_classes=n_classes, grouping=grouping_per_layer)
    net = Network.build(config, make_rng(seed + 10_000))
    net.forward(x, mode="eval")
    slope = config.nonlinearity_slope
    results = []
    for layer in net.layers:
        layer_spec = KernelSpec(spec.family, spec.sigma, layer.grouping)
        analytic = layer_gradient(layer_spec, layer, labels, n_classes, gamma)
        oracle = oracle_layer_gradient(
            layer_spec, layer.W, layer.inputs, labels, n_classes, gamma, slope,
            step)
        results.append(compare_gradients(analytic, oracle))
    return results


GRADCHECK_CONFIGS = (
    ("linear", KernelFamily.LINEAR, None, False, False),
    ("cossim", KernelFamily.COSINE, None, False, False),
    ("cossim+grp+div", KernelFamily.COSINE, None, True, True),
    ("gaussian", KernelFamily.GAUSSIAN, 2.0, False, False),
    ("gaussian+grp", KernelFamily.GAUSSIAN, 1.0, True, False),
    ("gaussian+grp+div", KernelFamily.GAUSSIAN, 1.0, True, True),
)


def standard_gradcheck_suite(seeds=range(20), widths=(8, 6, 4)):
    """The six kernel configurations checked over random nets.

    Yields (name, worst relative error, worst small-entry absolute error).
    Grouped configurations use per-layer group counts (3, 2) so every width
    divides evenly.
    """
    from .kernels import GroupingSpec

    for name, family, sigma, grouped, divnorm in GRADCHECK_CONFIGS:
        spec = KernelSpec(family, sigma, None)
        grouping = None
        if grouped:
            grouping = tuple(
                GroupingSpec(g, divisive_normalization=divnorm)
                for g in (3, 2)[:len(widths) - 1]
            )
        worst_rel = worst_abs = 0.0
        for seed in seeds:
            for rel, ab in gradcheck_instance(spec, grouping, seed, widths):
                worst_rel = max(worst_rel, rel)
                worst_abs = max(worst_abs, ab)
        yield name, worst_rel, worst_abs
