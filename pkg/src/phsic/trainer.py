"""Experiment orchestration: optimizers, schedules, epoch loop, evaluation.

Every hidden layer owns its optimizer and is updated from its local
objective in forward order within each batch (earlier layers are already
updated while later ones are still pending; a layer's update never touches
the activations already computed for the batch, so this is equivalent to
updating during the forward pass).  The readout trains last, by softmax
cross-entropy, and exists to measure accuracy.

Methods: "phsic" (local kernel objectives + cross-entropy readout),
"last-layer" (hidden layers frozen), "backprop" (chain rule end to end on a
plain network, the reference baseline).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .kernels import KernelSpec
from .network import Network, NetworkConfig, softmax_cross_entropy
from .numerics import make_rng, rng_state
from .rules import backprop_gradients, layer_gradient_with_objectives

METHODS = ("phsic", "backprop", "last-layer")


@dataclass
class TrainerConfig:
    epochs: int
    batch_size: int = 256
    gamma: float = 2.0
    local_lr: float = 1.0
    final_lr: float = 1e-3
    momentum: float = 0.95
    weight_decay_local: float = 1e-7
    weight_decay_final: float = 1e-6
    lr_decay_factor: float = 0.25
    lr_decay_epochs: tuple = (50, 75, 90)
    seed: int = 0
    validation_fraction: float = 0.1
    method: str = "phsic"

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (pair-based objective)")
        for name in ("local_lr", "final_lr", "momentum", "weight_decay_local",
                     "weight_decay_final", "lr_decay_factor"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must lie in [0, 1)")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        self.lr_decay_epochs = tuple(int(e) for e in self.lr_decay_epochs)


@dataclass
class MetricsRecord:
    epoch: int
    train_acc: float
    val_acc: float
    test_acc: float
    layer_zz: tuple
    layer_yz: tuple
    seconds: float


@dataclass
class OptimizerState:
    layer_vel: list
    readout_w_vel: np.ndarray
    readout_b_vel: np.ndarray

    @staticmethod
    def for_network(net: Network) -> "OptimizerState":
        return OptimizerState(
            layer_vel=[np.zeros_like(layer.W) for layer in net.layers],
            readout_w_vel=np.zeros_like(net.readout.W),
            readout_b_vel=np.zeros_like(net.readout.bias),
        )


def sgd_step(w: np.ndarray, grad: np.ndarray, velocity: np.ndarray,
             lr: float, momentum: float, weight_decay: float):
    """Classical momentum with weight decay folded into the gradient.

    velocity <- momentum * velocity + grad + weight_decay * w
    w        <- w - lr * velocity          (both updated in place)
    """
    if w.shape != grad.shape or w.shape != velocity.shape:
        raise DimensionError(
            f"sgd_step shapes: w{w.shape} grad{grad.shape} vel{velocity.shape}"
        )
    velocity *= momentum
    velocity += grad + weight_decay * w
    w -= lr * velocity
    return w, velocity


def lr_at_epoch(cfg: TrainerConfig, epoch: int):
    """(local, final) learning rates after the step decays due by `epoch`."""
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    n_decays = sum(1 for e in cfg.lr_decay_epochs if e <= epoch)
    factor = cfg.lr_decay_factor**n_decays
    return cfg.local_lr * factor, cfg.final_lr * factor


def _layer_spec(base: KernelSpec, layer) -> KernelSpec:
    return KernelSpec(base.family, base.sigma, layer.grouping)


def train_batch(net: Network, spec: KernelSpec | None, x: np.ndarray, y,
                n_classes: int, cfg: TrainerConfig, opt: OptimizerState,
                lrs, rng) -> tuple:
    """One batch: forward, per-layer local updates in order, then readout.

    Returns (per-layer zz values, per-layer yz values, readout loss).
    """
    lr_local, lr_final = lrs
    if cfg.method == "backprop":
        grads, (g_w, g_b), loss = backprop_gradients(net, x, y, mode="train", rng=rng)
        for layer, grad, vel in zip(net.layers, grads, opt.layer_vel):
            sgd_step(layer.W, grad, vel, lr_final, cfg.momentum,
                     cfg.weight_decay_final)
        sgd_step(net.readout.W, g_w, opt.readout_w_vel, lr_final,
                 cfg.momentum, cfg.weight_decay_final)
        sgd_step(net.readout.bias, g_b, opt.readout_b_vel, lr_final,
                 cfg.momentum, cfg.weight_decay_final)
        nan = (float("nan"),) * len(net.layers)
        return nan, nan, loss

    if cfg.method == "last-layer":
        lr_local = 0.0
    out = net.forward(x, mode="train", rng=rng)
    zz_list, yz_list = [], []
    for layer, vel in zip(net.layers, opt.layer_vel):
        grad, zz, yz = layer_gradient_with_objectives(
            _layer_spec(spec, layer), layer, y, n_classes, cfg.gamma)
        zz_list.append(zz)
        yz_list.append(yz)
        if lr_local > 0.0:
            sgd_step(layer.W, grad, vel, lr_local, cfg.momentum,
                     cfg.weight_decay_local)
    logits = net.logits(out)
    loss, probs = softmax_cross_entropy(logits, y)
    m = x.shape[0]
    dlogits = probs
    dlogits[np.arange(m), np.asarray(y)] -= 1.0
    dlogits /= m
    sgd_step(net.readout.W, dlogits.T @ out, opt.readout_w_vel, lr_final,
             cfg.momentum, cfg.weight_decay_final)
    sgd_step(net.readout.bias, dlogits.sum(axis=0), opt.readout_b_vel,
             lr_final, cfg.momentum, cfg.weight_decay_final)
    return tuple(zz_list), tuple(yz_list), loss


def train_epoch(net: Network, spec: KernelSpec | None, x: np.ndarray, y,
                n_classes: int, cfg: TrainerConfig, opt: OptimizerState,
                lrs, rng, augment=None):
    """Shuffled pass over one dataset shard; returns per-layer mean objectives."""
    if x.shape[0] == 0:
        raise ConfigError("train_epoch called with an empty shard")
    perm = rng.permutation(x.shape[0])
    n_layers = len(net.layers)
    zz_sum = np.zeros(n_layers)
    yz_sum = np.zeros(n_layers)
    loss_sum = 0.0
    n_batches = 0
    for start in range(0, x.shape[0], cfg.batch_size):
        idx = perm[start:start + cfg.batch_size]
        if idx.shape[0] < 2:
            continue  # pair-based objective needs at least two samples
        xb = x[idx]
        if augment is not None:
            xb = augment(xb, rng)
        zz, yz, loss = train_batch(net, spec, xb, y[idx], n_classes, cfg, opt,
                                   lrs, rng)
        zz_sum += zz
        yz_sum += yz
        loss_sum += loss
        n_batches += 1
    return zz_sum / n_batches, yz_sum / n_batches, loss_sum / n_batches


def evaluate(net: Network, x: np.ndarray, y, batch_size: int = 1024) -> float:
    """Fraction of samples whose argmax logit matches the label (eval mode)."""
    if x.shape[0] == 0:
        return float("nan")
    correct = 0
    for start in range(0, x.shape[0], batch_size):
        xb = x[start:start + batch_size]
        logits = net.logits(net.forward(xb, mode="eval"))
        correct += int((logits.argmax(axis=1) == np.asarray(y[start:start + batch_size])).sum())
    return correct / x.shape[0]


@dataclass
class ExperimentResult:
    records: list
    net: Network
    opt: OptimizerState
    rng: np.random.Generator
    val_indices: np.ndarray
    train_indices: np.ndarray


def run_training(net_cfg: NetworkConfig, cfg: TrainerConfig,
                 spec: KernelSpec | None, train_images, train_labels,
                 test_images, test_labels, n_classes: int,
                 augment=None, on_epoch=None, resume=None) -> ExperimentResult:
    """Deterministic training run.

    The single run generator drives, in order: the validation split, weight
    init, then per-epoch shuffles and dropout draws.  ``resume`` is a
    (weights, velocities, rng_state, next_epoch) tuple replayed on top of
    the deterministic setup, so a resumed run continues the uninterrupted
    trajectory exactly.
    """
    rng = make_rng(cfg.seed)
    n = train_images.shape[0]
    perm = rng.permutation(n)
    n_val = int(round(cfg.validation_fraction * n))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    net = Network.build(net_cfg, rng)
    opt = OptimizerState.for_network(net)
    start_epoch = 0
    if resume is not None:
        weights, velocities, state, start_epoch = resume
        for layer, w in zip(net.layers, weights[:-2]):
            layer.W[...] = w
        net.readout.W[...] = weights[-2]
        net.readout.bias[...] = weights[-1]
        for vel, src in zip(opt.layer_vel, velocities[:-2]):
            vel[...] = src
        opt.readout_w_vel[...] = velocities[-2]
        opt.readout_b_vel[...] = velocities[-1]
        rng.bit_generator.state = state

    x_train, y_train = train_images[train_idx], train_labels[train_idx]
    x_val, y_val = train_images[val_idx], train_labels[val_idx]
    records = []
    for epoch in range(start_epoch, cfg.epochs):
        t0 = time.perf_counter()
        lrs = lr_at_epoch(cfg, epoch)
        zz, yz, _ = train_epoch(net, spec, x_train, y_train, n_classes, cfg,
                                opt, lrs, rng, augment=augment)
        record = MetricsRecord(
            epoch=epoch,
            train_acc=evaluate(net, x_train, y_train),
            val_acc=evaluate(net, x_val, y_val),
            test_acc=evaluate(net, test_images, test_labels),
            layer_zz=tuple(zz),
            layer_yz=tuple(yz),
            seconds=time.perf_counter() - t0,
        )
        records.append(record)
        if on_epoch is not None:
            on_epoch(epoch, record, net, opt, rng_state(rng))
    return ExperimentResult(records=records, net=net, opt=opt, rng=rng,
                            val_indices=val_idx, train_indices=train_idx)
