"""Fully connected feedforward network with optional grouping / divisive normalization.

Per-layer pipeline (train mode):

    a = input @ W.T  ->  z = lrelu(a)  ->  group stats (z_c, u, v, r)
      ->  next-layer input = r if divisive normalization else z
      ->  inverted dropout on that output

The local objective of a layer always sees the pre-dropout ``z`` (and its
grouped response ``v``); only the *next* layer sees the normalized, dropped
output.  Hidden layers carry no bias; the readout is affine.

All quantities a weight update needs are cached on the layer per batch:
the actual input, pre-activations, activations, the leaky-ReLU derivative,
group-centered activities, smoothed variances, grouped response, normalized
output, and the dropout mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, StateError
from .kernels import GroupingSpec
from .numerics import DEFAULT_LRELU_SLOPE, init_weights


def lrelu(x, slope: float = DEFAULT_LRELU_SLOPE):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0.0, x, slope * x)


def lrelu_deriv(x, slope: float = DEFAULT_LRELU_SLOPE):
    """Derivative of lrelu; the tie at 0 resolves to 1."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0.0, 1.0, slope)


def group_response(z, spec: GroupingSpec):
    """Smoothed group variances and the centered, exponentiated group feature.

    Operates on the last axis.  Returns (u, v, z_centered) where, per group
    of size c with offset delta:

        z_centered = z - group mean
        u = delta/c + mean(z_centered^2)            (>= delta/c > 0)
        v = u^(1-p) - mean over groups of u^(1-p)   (sums to 0 across groups)
    """
    z = np.asarray(z, dtype=np.float64)
    width = z.shape[-1]
    c = spec.members_per_group(width)
    g = spec.group_count
    shape = z.shape[:-1] + (g, c)
    zg = z.reshape(shape)
    zc = zg - zg.mean(axis=-1, keepdims=True)
    u = spec.smoothing_delta / c + np.square(zc).mean(axis=-1)
    powed = u ** (1.0 - spec.exponent_p)
    v = powed - powed.mean(axis=-1, keepdims=True)
    return u, v, zc.reshape(z.shape)


def divnorm_output(z_centered, u, spec: GroupingSpec):
    """Per-neuron normalized output z_centered / u^p (u broadcast over the group)."""
    c = z_centered.shape[-1] // spec.group_count
    scale = np.repeat(u ** (-spec.exponent_p), c, axis=-1)
    return z_centered * scale


@dataclass
class NetworkConfig:
    """Widths include the input layer; grouping applies per hidden layer."""

    layer_widths: tuple
    n_classes: int
    nonlinearity_slope: float = DEFAULT_LRELU_SLOPE
    grouping: object = None  # GroupingSpec, per-layer sequence, or None
    dropout_rate: float = 0.0

    def __post_init__(self):
        self.layer_widths = tuple(int(w) for w in self.layer_widths)
        if len(self.layer_widths) < 2:
            raise DimensionError("need an input width and at least one hidden layer")
        if any(w < 1 for w in self.layer_widths):
            raise DimensionError(f"widths must be >= 1: {self.layer_widths}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise DimensionError(f"dropout_rate in [0,1): {self.dropout_rate}")
        n_hidden = len(self.layer_widths) - 1
        if self.grouping is None or isinstance(self.grouping, GroupingSpec):
            self.grouping = (self.grouping,) * n_hidden
        else:
            self.grouping = tuple(self.grouping)
        if len(self.grouping) != n_hidden:
            raise DimensionError(
                f"{len(self.grouping)} grouping entries for {n_hidden} hidden layers"
            )
        for width, spec in zip(self.layer_widths[1:], self.grouping):
            if spec is not None:
                spec.members_per_group(width)  # raises if it does not divide

    @property
    def hidden_widths(self) -> tuple:
        return self.layer_widths[1:]


@dataclass
class LayerState:
    """Weights plus the forward cache for the most recent batch."""

    W: np.ndarray
    grouping: GroupingSpec | None = None
    inputs: np.ndarray | None = None
    pre: np.ndarray | None = None
    z: np.ndarray | None = None
    g: np.ndarray | None = None  # lrelu derivative at pre
    z_centered: np.ndarray | None = None
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    r: np.ndarray | None = None
    mask: np.ndarray | None = None
    out: np.ndarray | None = None

    def require_cache(self):
        if self.z is None or self.inputs is None:
            raise StateError("layer has no cached forward pass")

    def clear_cache(self):
        for name in ("inputs", "pre", "z", "g", "z_centered", "u", "v", "r",
                     "mask", "out"):
            setattr(self, name, None)


@dataclass
class ReadoutState:
    W: np.ndarray
    bias: np.ndarray


@dataclass
class Network:
    config: NetworkConfig
    layers: list = field(default_factory=list)
    readout: ReadoutState | None = None

    @staticmethod
    def build(config: NetworkConfig, rng: np.random.Generator) -> "Network":
        slope = config.nonlinearity_slope
        layers = []
        widths = config.layer_widths
        for fan_in, fan_out, grouping in zip(widths[:-1], widths[1:], config.grouping):
            layers.append(LayerState(W=init_weights(fan_in, fan_out, rng, slope),
                                     grouping=grouping))
        readout = ReadoutState(
            W=init_weights(widths[-1], config.n_classes, rng, slope),
            bias=np.zeros(config.n_classes),
        )
        return Network(config=config, layers=layers, readout=readout)

    def forward(self, x: np.ndarray, mode: str = "eval",
                rng: np.random.Generator | None = None) -> np.ndarray:
        """Run the hidden stack, caching per-layer quantities; returns the
        final hidden output (input to the readout)."""
        if mode not in ("train", "eval"):
            raise StateError(f"unknown mode {mode!r}")
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.config.layer_widths[0]:
            raise DimensionError(
                f"input width {x.shape[1]} != {self.config.layer_widths[0]}"
            )
        if mode == "train" and self.config.dropout_rate > 0.0 and rng is None:
            raise StateError("train-mode forward with dropout needs an rng")
        slope = self.config.nonlinearity_slope
        rate = self.config.dropout_rate
        current = x
        for layer in self.layers:
            layer.inputs = current
            layer.pre = current @ layer.W.T
            layer.z = lrelu(layer.pre, slope)
            layer.g = lrelu_deriv(layer.pre, slope)
            spec = layer.grouping
            if spec is not None:
                layer.u, layer.v, layer.z_centered = group_response(layer.z, spec)
                layer.r = divnorm_output(layer.z_centered, layer.u, spec)
                out = layer.r if spec.divisive_normalization else layer.z
            else:
                layer.u = layer.v = layer.z_centered = layer.r = None
                out = layer.z
            if mode == "train" and rate > 0.0:
                layer.mask = (rng.random(out.shape) >= rate) / (1.0 - rate)
                out = out * layer.mask
            else:
                layer.mask = None
            layer.out = out
            current = out
        return current

    def logits(self, hidden_out: np.ndarray) -> np.ndarray:
        return readout_forward(self.readout, hidden_out)


def readout_forward(readout: ReadoutState, z_last: np.ndarray) -> np.ndarray:
    z_last = np.atleast_2d(np.asarray(z_last, dtype=np.float64))
    if z_last.shape[1] != readout.W.shape[1]:
        raise DimensionError(
            f"readout input width {z_last.shape[1]} != {readout.W.shape[1]}"
        )
    return z_last @ readout.W.T + readout.bias


def softmax_cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and softmax probabilities (numerically shifted)."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels)
    shifted = logits - logits.max(axis=1, keepdims=True)
    expv = np.exp(shifted)
    probs = expv / expv.sum(axis=1, keepdims=True)
    rows = np.arange(logits.shape[0])
    logp = shifted[rows, labels] - np.log(expv.sum(axis=1))
    return float(-logp.mean()), probs
