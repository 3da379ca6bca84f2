"""Flat run configuration: defaults <- key=value file <- CLI flags.

The file format is deliberately flat text, one ``key=value`` per line,
``#`` comments allowed.  Unknown keys are hard errors.  The resolved
configuration is echoed verbatim into every run's JSON summary so a run can
be reproduced from its outputs alone.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .kernels import GroupingSpec, KernelFamily, KernelSpec
from .network import NetworkConfig
from .trainer import TrainerConfig

_KERNELS = {"gaussian": KernelFamily.GAUSSIAN,
            "cossim": KernelFamily.COSINE,
            "linear": KernelFamily.LINEAR}


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_ints(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(part) for part in text.split(","))


def _parse_paths(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(part.strip() for part in text.split(","))


@dataclass
class RunConfig:
    method: str = "phsic"            # phsic | backprop | last-layer
    kernel: str = "gaussian"         # gaussian | cossim | linear
    sigma: float = 5.0
    grouping: int = 32               # groups per hidden layer; 0 disables
    divnorm: bool = True
    exponent_p: float = 0.2
    smoothing_delta: float = 1.0
    gamma: float = 2.0
    widths: tuple = (1024, 1024, 1024)
    slope: float = 0.01
    dropout: float = 0.01
    epochs: int = 100
    batch_size: int = 256
    local_lr: float = 1.0
    final_lr: float = 1e-3
    momentum: float = 0.95
    weight_decay_local: float = 1e-7
    weight_decay_final: float = 1e-6
    lr_decay_factor: float = 0.25
    lr_decay_epochs: tuple = (50, 75, 90)
    seed: int = 0
    validation_fraction: float = 0.1
    n_classes: int = 10
    dataset: str = "idx"             # idx | cifar10
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    cifar_train: tuple = ()
    cifar_test: str = ""
    augment_cifar: bool = False
    out_dir: str = ""
    checkpoint_every: int = 0

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out


_PARSERS = {
    "method": str, "kernel": str, "sigma": float, "grouping": int,
    "divnorm": _parse_bool, "exponent_p": float, "smoothing_delta": float,
    "gamma": float, "widths": _parse_ints, "slope": float, "dropout": float,
    "epochs": int, "batch_size": int, "local_lr": float, "final_lr": float,
    "momentum": float, "weight_decay_local": float,
    "weight_decay_final": float, "lr_decay_factor": float,
    "lr_decay_epochs": _parse_ints, "seed": int,
    "validation_fraction": float, "n_classes": int, "dataset": str,
    "train_images": str, "train_labels": str, "test_images": str,
    "test_labels": str, "cifar_train": _parse_paths, "cifar_test": str,
    "augment_cifar": _parse_bool, "out_dir": str, "checkpoint_every": int,
}


def read_config_file(path) -> dict:
    """Parse a flat key=value file into typed values."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, text = line.partition("=")
        key = key.strip()
        if key not in _PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _PARSERS[key](text.strip())
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Layered resolution: dataclass defaults <- file <- explicit overrides."""
    values = {}
    if path is not None:
        values.update(read_config_file(path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _PARSERS:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, str):
            try:
                value = _PARSERS[key](value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from exc
        values[key] = value
    cfg = RunConfig(**values)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig):
    if cfg.method not in ("phsic", "backprop", "last-layer"):
        raise ConfigError(f"method must be phsic|backprop|last-layer, got {cfg.method!r}")
    if cfg.kernel not in _KERNELS:
        raise ConfigError(f"kernel must be one of {sorted(_KERNELS)}, got {cfg.kernel!r}")
    if cfg.dataset not in ("idx", "cifar10"):
        raise ConfigError(f"dataset must be idx|cifar10, got {cfg.dataset!r}")
    if not cfg.widths:
        raise ConfigError("widths must list at least one hidden layer")
    if cfg.method == "backprop" and cfg.grouping:
        raise ConfigError("the backprop baseline runs on a plain network "
                          "(set grouping=0)")
    if cfg.grouping:
        for w in cfg.widths:
            if w % cfg.grouping != 0:
                raise ConfigError(
                    f"grouping {cfg.grouping} does not divide width {w}")


def require_dataset_paths(cfg: RunConfig):
    if cfg.dataset == "idx":
        missing = [name for name in ("train_images", "train_labels",
                                     "test_images", "test_labels")
                   if not getattr(cfg, name)]
        if missing:
            raise ConfigError(f"missing dataset paths: {', '.join(missing)}")
    else:
        if not cfg.cifar_train or not cfg.cifar_test:
            raise ConfigError("missing dataset paths: cifar_train, cifar_test")


def kernel_spec(cfg: RunConfig) -> KernelSpec | None:
    if cfg.method == "backprop":
        return None
    grouping = None
    if cfg.grouping:
        grouping = GroupingSpec(
            group_count=cfg.grouping,
            exponent_p=cfg.exponent_p,
            smoothing_delta=cfg.smoothing_delta,
            divisive_normalization=cfg.divnorm,
        )
    family = _KERNELS[cfg.kernel]
    sigma = cfg.sigma if family is KernelFamily.GAUSSIAN else None
    return KernelSpec(family, sigma, grouping)


def network_config(cfg: RunConfig, input_width: int) -> NetworkConfig:
    spec = kernel_spec(cfg)
    grouping = spec.grouping if spec is not None else None
    return NetworkConfig(
        layer_widths=(input_width,) + tuple(cfg.widths),
        n_classes=cfg.n_classes,
        nonlinearity_slope=cfg.slope,
        grouping=grouping,
        dropout_rate=cfg.dropout,
    )


def trainer_config(cfg: RunConfig) -> TrainerConfig:
    return TrainerConfig(
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        gamma=cfg.gamma,
        local_lr=cfg.local_lr,
        final_lr=cfg.final_lr,
        momentum=cfg.momentum,
        weight_decay_local=cfg.weight_decay_local,
        weight_decay_final=cfg.weight_decay_final,
        lr_decay_factor=cfg.lr_decay_factor,
        lr_decay_epochs=cfg.lr_decay_epochs,
        seed=cfg.seed,
        validation_fraction=cfg.validation_fraction,
        method=cfg.method,
    )
