"""Streaming (point-by-point) forms of the Gaussian-family update rules.

The batch rule pairs every two samples; a stream replaces the pair with
"current sample vs. a proxy for the previous one".  Four modes:

* PAIRWISE  - keeps the exact previous input and re-evaluates it under the
  current weights; numerically identical to the symmetric two-point batch
  term, so a pairwise stream reproduces the m=2 batch trajectory exactly
  (up to the documented 2/m^2 = 1/2 learning-rate factor).
* MEAN      - previous activity replaced by a running mean trace; the
  update becomes plain Hebbian (current minus mean on both sides).
* PRODUCT   - grouped rule with the pre/post *product* compared against the
  product of the mean traces.
* SEPARATED - grouped rule re-arranged so each sample's Hebbian product is
  used once, weighted by the difference of the two third factors that
  reference it (emitted with one sample of latency).

MEAN/PRODUCT/SEPARATED follow the linear-layer circuit forms (no
nonlinearity-derivative factor); their equivalence tests run on slope-1.0
networks where the forms coincide with the exact rule.

Third-factor circuitry: ``b1`` is the squared activity-difference norm,
``b2 = gamma * label_similarity - 2 * exp(-b1 / 2 sigma^2)`` the uncentered
third factor, and ``b3`` an exponential running average of ``b2`` used for
centering.  The modulator is computed against the pre-update ``b3`` and the
average is advanced afterwards (the proportionality constant a simultaneous
update would contribute is folded into the learning rate).

Temporal differencing: activity changes are read out by convolving the
activity trace with a biphasic kernel ``-(t - c1) exp(-c2 |t - c1|)`` for
t >= 0.  The discrete taps are mean-subtracted over the truncated support
(zero net weight, so constant traces produce exactly zero) and scaled so a
unit step yields a peak response of exactly one.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import KernelError, StateError
from .kernels import KernelFamily, KernelSpec
from .rules import pair_delta_w


class StreamMode(str, Enum):
    PAIRWISE = "pairwise"
    MEAN = "mean"
    PRODUCT = "product"
    SEPARATED = "separated"


@dataclass(frozen=True)
class CircuitConfig:
    """Constants of the streaming circuitry.

    Defaults are configuration choices, not reported values: c1 = 2 dt,
    c2 = 1/(4 dt), beta = 0.9, leak = 1e-3.
    """

    dt: float = 0.01
    c1: float | None = None
    c2: float | None = None
    beta: float = 0.9
    leak: float = 1e-3
    mu_rate: float = 0.1

    def __post_init__(self):
        if self.dt <= 0.0:
            raise StateError(f"dt must be positive, got {self.dt}")
        if self.c1 is None:
            object.__setattr__(self, "c1", 2.0 * self.dt)
        if self.c2 is None:
            object.__setattr__(self, "c2", 1.0 / (4.0 * self.dt))
        if not 0.0 < self.beta < 1.0:
            raise StateError(f"beta must lie in (0, 1), got {self.beta}")
        if self.c1 <= 0.0 or self.c2 <= 0.0:
            raise StateError("c1 and c2 must be positive")
        if self.leak < 0.0:
            raise StateError(f"leak must be >= 0, got {self.leak}")


def smoothing_kernel(t: float, c1: float, c2: float) -> float:
    """Raw biphasic difference kernel; zero for t < 0 and at t = c1."""
    if c1 <= 0.0 or c2 <= 0.0:
        raise StateError("c1 and c2 must be positive")
    if t < 0.0:
        return 0.0
    return -(t - c1) * np.exp(-c2 * abs(t - c1))


def difference_kernel_taps(cfg: CircuitConfig) -> np.ndarray:
    """Normalized discrete taps: zero-sum, unit peak response to a step."""
    support = cfg.c1 + 20.0 / cfg.c2
    n = int(np.ceil(support / cfg.dt)) + 1
    taps = np.array([smoothing_kernel(i * cfg.dt, cfg.c1, cfg.c2) for i in range(n)])
    taps -= taps.mean()
    peak = np.cumsum(taps).max()
    return taps / peak


def temporal_difference(trace, cfg: CircuitConfig) -> np.ndarray:
    """Convolve a scalar trace with the difference kernel (valid region only).

    For a trace that holds a value and switches to another, the peak of the
    output approximates the difference.
    """
    trace = np.asarray(trace, dtype=np.float64)
    taps = difference_kernel_taps(cfg)
    if trace.shape[0] < taps.shape[0]:
        raise StateError(
            f"trace length {trace.shape[0]} < kernel support {taps.shape[0]}"
        )
    return np.convolve(trace, taps, mode="valid")


def memory_ode_step(omega, z, mu, c: float, dt: float):
    """Forward-Euler step of the deviation-latching memory dynamics:

        d omega / dt = (z - mu)^3 - tanh(|z - mu|^3) omega - c omega
    """
    if dt <= 0.0:
        raise StateError(f"dt must be positive, got {dt}")
    dev = np.asarray(z, dtype=np.float64) - np.asarray(mu, dtype=np.float64)
    cube = dev**3
    return omega + dt * (cube - np.tanh(np.abs(cube)) * omega - c * omega)


@dataclass
class SampleView:
    """Per-layer quantities of one sample as the stream sees them."""

    x: np.ndarray
    z: np.ndarray
    g: np.ndarray
    v: np.ndarray | None = None
    r: np.ndarray | None = None
    label: int | None = None


@dataclass
class OnlineCircuitState:
    """Streaming traces and accumulators for one layer."""

    cfg: CircuitConfig
    spec: KernelSpec
    gamma: float
    b1: float = 0.0
    b2: float = 0.0
    b3: float = 0.0
    started: bool = False
    prev: SampleView | None = None
    mu_z: np.ndarray | None = None
    mu_x: np.ndarray | None = None
    mu_v: np.ndarray | None = None
    mu_r: np.ndarray | None = None
    omega: np.ndarray | None = None
    pending_hebb: np.ndarray | None = None
    pending_third: np.ndarray | None = None

    def __post_init__(self):
        if self.spec.family is not KernelFamily.GAUSSIAN:
            raise KernelError("streaming rules are defined for the Gaussian family")

    def set_centering(self, b3: float):
        """Pin the centering average (used where exact means are known)."""
        self.b3 = float(b3)
        self.started = True

    def _ema(self, trace, value):
        if trace is None:
            return np.array(value, dtype=np.float64)
        rate = self.cfg.mu_rate
        return (1.0 - rate) * trace + rate * value

    def observe(self, view: SampleView):
        """Advance the mean traces and the previous-sample cache."""
        self.mu_z = self._ema(self.mu_z, view.z)
        self.mu_x = self._ema(self.mu_x, view.x)
        if view.v is not None:
            self.mu_v = self._ema(self.mu_v, view.v)
        if view.r is not None:
            self.mu_r = self._ema(self.mu_r, view.r)
        if self.omega is None:
            self.omega = np.zeros_like(view.z)
        self.prev = view
        self.started = True


def third_factor_stream(state: OnlineCircuitState, label_similarity: float,
                        delta: np.ndarray):
    """Third factor from an activity (or grouped-response) difference.

    Updates b1 and b2, computes the modulator against the current running
    average b3, then advances b3.  Returns a scalar for plain kernels and a
    per-group vector (scalar times the group differences) for grouped ones.
    """
    if not state.started:
        raise StateError("streaming state not initialized (no sample observed)")
    sigma = state.spec.sigma
    delta = np.asarray(delta, dtype=np.float64)
    state.b1 = float(delta @ delta)
    kval = float(np.exp(-state.b1 / (2.0 * sigma**2)))
    state.b2 = state.gamma * label_similarity - 2.0 * kval
    m_scalar = -(state.b2 - state.b3) * kval / sigma**2
    state.b3 = state.cfg.beta * state.b2 + (1.0 - state.cfg.beta) * state.b3
    if state.spec.grouping is not None:
        return m_scalar * delta
    return m_scalar


def _grouped_scale(spec: KernelSpec, width: int) -> float:
    members = spec.grouping.members_per_group(width)
    return 2.0 * (1.0 - spec.grouping.exponent_p) / members


def _expand_groups(values: np.ndarray, width: int, group_count: int) -> np.ndarray:
    return np.repeat(values, width // group_count)


def online_update_step(state: OnlineCircuitState, current: SampleView,
                       label_similarity: float, mode: StreamMode):
    """One streaming weight increment; returns None while the mode is priming.

    The increment is a descent direction on the two-point scale (no 2/m^2
    factor); trainers scale it by 0.5 * learning rate to match batch m=2.
    """
    spec = state.spec
    grouped = spec.grouping is not None
    if mode in (StreamMode.PRODUCT, StreamMode.SEPARATED) and not grouped:
        raise KernelError(f"{mode.value} mode needs a grouped kernel")
    if mode is StreamMode.MEAN and grouped:
        raise KernelError("mean mode is the plain-kernel rule")

    if mode is StreamMode.PAIRWISE:
        if state.prev is None:
            state.observe(current)
            return None
        prev = state.prev
        feats_cur = current.v if grouped else current.z
        feats_prev = prev.v if grouped else prev.z
        diff = feats_cur - feats_prev
        kval = float(np.exp(-(diff @ diff) / (2.0 * spec.sigma**2)))
        mean_z = (1.0 + kval) / 2.0
        mean_y = (1.0 + label_similarity) / 2.0
        state.set_centering(state.gamma * mean_y - 2.0 * mean_z)
        kw = {}
        if grouped:
            kw = dict(v_i=current.v, v_j=prev.v, r_i=current.r, r_j=prev.r)
        dw, tf = pair_delta_w(
            spec, current.z, prev.z, current.g, prev.g, current.x, prev.x,
            label_similarity, state.gamma, mean_y, mean_z, **kw,
        )
        state.b1 = float(diff @ diff)
        state.b2 = state.gamma * label_similarity - 2.0 * kval
        state.observe(current)
        return dw

    if mode is StreamMode.MEAN:
        if state.prev is None:
            state.observe(current)
            return None
        delta = current.z - state.mu_z
        m_scalar = third_factor_stream(state, label_similarity, delta)
        dw = m_scalar * delta[:, None] * (current.x - state.mu_x)[None, :]
        state.observe(current)
        return dw

    if mode is StreamMode.PRODUCT:
        if state.prev is None:
            state.observe(current)
            return None
        width = current.z.shape[0]
        delta_v = current.v - state.mu_v
        m_groups = third_factor_stream(state, label_similarity, delta_v)
        hebb = (current.r[:, None] * current.x[None, :]
                - state.mu_r[:, None] * state.mu_x[None, :])
        scale = _grouped_scale(spec, width)
        dw = scale * _expand_groups(m_groups, width, spec.grouping.group_count)[:, None] * hebb
        state.observe(current)
        return dw

    # SEPARATED: emit the previous sample's update once its successor arrives.
    if state.prev is None:
        state.observe(current)
        return None
    width = current.z.shape[0]
    delta_v = current.v - state.prev.v
    m_new = third_factor_stream(state, label_similarity, delta_v)
    dw = None
    if state.pending_hebb is not None:
        scale = _grouped_scale(spec, width)
        third = state.pending_third - m_new
        dw = scale * _expand_groups(third, width, spec.grouping.group_count)[:, None] \
            * state.pending_hebb
    state.pending_hebb = current.r[:, None] * current.x[None, :]
    state.pending_third = m_new
    state.observe(current)
    return dw


class PairwiseStreamTrainer:
    """Point-by-point trainer for the hidden stack (pairwise mode).

    Each new sample is paired with the stored previous input and both are
    re-evaluated under the current weights, layer by layer; this makes every
    step identical to one m=2 batch step, up to the 2/m^2 = 1/2 factor the
    trainer applies to the pair update (W += 0.5 * lr * dW).

    ``trace`` (optional list) collects (step, b1, b2, b3, M, |dW|) rows for
    the monitored layer.
    """

    def __init__(self, net, spec: KernelSpec, n_classes: int, gamma: float,
                 lr: float, trace: list | None = None, trace_layer: int = 0):
        if spec.family is not KernelFamily.GAUSSIAN:
            raise KernelError("streaming rules are defined for the Gaussian family")
        self.net = net
        self.spec = spec
        self.n_classes = n_classes
        self.gamma = gamma
        self.lr = lr
        self.trace = trace
        self.trace_layer = trace_layer
        self.prev_x = None
        self.prev_label = None
        self.step_count = 0

    def step(self, x: np.ndarray, label: int) -> bool:
        """Feed one sample; returns True once an update was applied."""
        from .kernels import label_kernel
        from .rules import two_point_update

        x = np.asarray(x, dtype=np.float64)
        if self.prev_x is None:
            self.prev_x, self.prev_label = x, int(label)
            return False
        pair = np.stack([x, self.prev_x])
        self.net.forward(pair, mode="eval")
        ky = label_kernel(int(label), self.prev_label, self.n_classes)
        mean_y = (1.0 + ky) / 2.0
        for index, layer in enumerate(self.net.layers):
            layer_spec = KernelSpec(self.spec.family, self.spec.sigma,
                                    layer.grouping)
            feats = layer.v if layer.grouping is not None else layer.z
            diff = feats[0] - feats[1]
            kval = float(np.exp(-(diff @ diff) / (2.0 * layer_spec.sigma**2)))
            mean_z = (1.0 + kval) / 2.0
            dw, tf = two_point_update(layer_spec, layer, (0, 1), ky,
                                      self.gamma, mean_y, mean_z)
            layer.W += 0.5 * self.lr * dw
            if self.trace is not None and index == self.trace_layer:
                self.trace.append((
                    self.step_count,
                    float(diff @ diff),
                    self.gamma * ky - 2.0 * kval,
                    self.gamma * mean_y - 2.0 * mean_z,
                    tf.scalar,
                    float(np.linalg.norm(0.5 * self.lr * dw)),
                ))
        self.prev_x, self.prev_label = x, int(label)
        self.step_count += 1
        return True
