"""End-to-end experiment runs: data, training loop, checkpoints, reports."""

from __future__ import annotations

from pathlib import Path

from . import report
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import (
    RunConfig,
    kernel_spec,
    network_config,
    require_dataset_paths,
    trainer_config,
)
from .data import augment_cifar_batch, load_cifar10_binary, load_idx
from .errors import ConfigError
from .network import Network
from .trainer import run_training

_RESUME_FREE_KEYS = {"epochs", "out_dir", "checkpoint_every"}


def load_datasets(cfg: RunConfig):
    require_dataset_paths(cfg)
    if cfg.dataset == "idx":
        train = load_idx(cfg.train_images, cfg.train_labels,
                         n_classes=cfg.n_classes, split="train")
        test = load_idx(cfg.test_images, cfg.test_labels,
                        n_classes=cfg.n_classes, split="test")
    else:
        train = load_cifar10_binary(cfg.cifar_train, split="train")
        test = load_cifar10_binary(cfg.cifar_test, split="test")
    if train.images.shape[1] != test.images.shape[1]:
        raise ConfigError(
            f"train/test feature widths disagree: "
            f"{train.images.shape[1]} vs {test.images.shape[1]}"
        )
    return train, test


def _resume_tuple(path, cfg: RunConfig):
    ckpt = load_checkpoint(path)
    current = cfg.to_dict()
    stored = ckpt.config
    for key, value in stored.items():
        if key in _RESUME_FREE_KEYS:
            continue
        if current.get(key) != value:
            raise ConfigError(
                f"checkpoint config mismatch on {key!r}: "
                f"checkpoint has {value!r}, run has {current.get(key)!r}"
            )
    weights = list(ckpt.weights) + [ckpt.readout_w, ckpt.readout_b]
    velocities = list(ckpt.vel_weights) + [ckpt.vel_readout_w, ckpt.vel_readout_b]
    return weights, velocities, ckpt.rng_state, ckpt.epoch + 1


def _make_checkpoint(cfg: RunConfig, net: Network, opt, rng_state_dict,
                     epoch: int) -> Checkpoint:
    return Checkpoint(
        config=cfg.to_dict(),
        epoch=epoch,
        rng_state=rng_state_dict,
        weights=[layer.W for layer in net.layers],
        readout_w=net.readout.W,
        readout_b=net.readout.bias,
        vel_weights=list(opt.layer_vel),
        vel_readout_w=opt.readout_w_vel,
        vel_readout_b=opt.readout_b_vel,
    )


def run_experiment(cfg: RunConfig, resume_path=None, quiet: bool = False):
    """Deterministic training run with reports; returns (records, net, paths)."""
    train_ds, test_ds = load_datasets(cfg)
    net_cfg = network_config(cfg, train_ds.images.shape[1])
    tr_cfg = trainer_config(cfg)
    spec = kernel_spec(cfg)
    augment = augment_cifar_batch if (cfg.dataset == "cifar10"
                                      and cfg.augment_cifar) else None

    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    resume = _resume_tuple(resume_path, cfg) if resume_path else None

    def on_epoch(epoch, record, net, opt, rng_state_dict):
        if not quiet:
            print(
                f"epoch {epoch:3d}  train {record.train_acc:.4f}  "
                f"val {record.val_acc:.4f}  test {record.test_acc:.4f}  "
                f"({record.seconds:.1f}s)",
                flush=True,
            )
        if out_dir is not None and cfg.checkpoint_every > 0 \
                and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(
                _make_checkpoint(cfg, net, opt, rng_state_dict, epoch),
                out_dir / f"epoch{epoch:04d}.ckpt",
            )

    result = run_training(
        net_cfg, tr_cfg, spec,
        train_ds.images, train_ds.labels,
        test_ds.images, test_ds.labels,
        n_classes=train_ds.n_classes,
        augment=augment,
        on_epoch=on_epoch,
        resume=resume,
    )

    paths = {}
    if out_dir is not None:
        from .numerics import rng_state

        last_epoch = result.records[-1].epoch if result.records else -1
        paths["checkpoint"] = save_checkpoint(
            _make_checkpoint(cfg, result.net, result.opt,
                             rng_state(result.rng), last_epoch),
            out_dir / "final.ckpt",
        )
        n_layers = len(result.net.layers)
        paths["metrics"] = report.write_metrics_csv(
            result.records, n_layers, out_dir / "metrics.csv")
        paths["summary"] = report.write_summary_json(
            cfg.to_dict(), result.records, out_dir / "summary.json")
        if result.records:
            paths["accuracy_figure"] = report.render_accuracy_figure(
                result.records, out_dir / "accuracy.png")
            paths["objective_figure"] = report.render_objective_figure(
                result.records, out_dir / "layer_objectives.png")
    return result, paths


def network_from_checkpoint(ckpt: Checkpoint) -> Network:
    """Rebuild a network (weights only) from a checkpoint's config echo."""
    cfg = RunConfig(**{k: tuple(v) if isinstance(v, list) else v
                       for k, v in ckpt.config.items()})
    input_width = ckpt.weights[0].shape[1]
    net_cfg = network_config(cfg, input_width)
    from .numerics import make_rng

    net = Network.build(net_cfg, make_rng(0))
    for layer, w in zip(net.layers, ckpt.weights):
        layer.W = w.copy()
    net.readout.W = ckpt.readout_w.copy()
    net.readout.bias = ckpt.readout_b.copy()
    return net
