"""Command-line entry points.

Subcommands: ``train`` (full experiment run), ``eval`` (checkpoint ->
accuracy), ``gradcheck`` (analytic-vs-finite-difference oracle suite),
``estimate`` (dependence estimators of a dataset under a kernel), and
``stream-demo`` (online pairwise training with a circuit trace dump).

Usage errors exit 2 (argparse); runtime failures exit 1 with a structured
message on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import PhsicError

_CONFIG_FLAGS = [
    # (flag, config key, help)
    ("--method", "method", "phsic | backprop | last-layer"),
    ("--kernel", "kernel", "gaussian | cossim | linear"),
    ("--sigma", "sigma", "Gaussian kernel width"),
    ("--grouping", "grouping", "groups per hidden layer (0 disables)"),
    ("--divnorm", "divnorm", "divisive normalization on/off"),
    ("--exponent-p", "exponent_p", "group variance exponent p"),
    ("--smoothing-delta", "smoothing_delta", "group variance offset"),
    ("--gamma", "gamma", "objective balance parameter"),
    ("--widths", "widths", "hidden widths, e.g. 1024,1024,1024"),
    ("--slope", "slope", "leaky-ReLU negative slope"),
    ("--dropout", "dropout", "dropout rate"),
    ("--epochs", "epochs", "training epochs"),
    ("--batch-size", "batch_size", "batch size (>= 2)"),
    ("--local-lr", "local_lr", "hidden-layer learning rate"),
    ("--final-lr", "final_lr", "readout (or backprop) learning rate"),
    ("--momentum", "momentum", "SGD momentum"),
    ("--weight-decay-local", "weight_decay_local", "local weight decay"),
    ("--weight-decay-final", "weight_decay_final", "final weight decay"),
    ("--lr-decay-factor", "lr_decay_factor", "multiplier at decay epochs"),
    ("--lr-decay-epochs", "lr_decay_epochs", "decay epochs, e.g. 50,75,90"),
    ("--validation-fraction", "validation_fraction", "validation split"),
    ("--n-classes", "n_classes", "number of classes"),
    ("--dataset", "dataset", "idx | cifar10"),
    ("--train-images", "train_images", "IDX training images path"),
    ("--train-labels", "train_labels", "IDX training labels path"),
    ("--test-images", "test_images", "IDX test images path"),
    ("--test-labels", "test_labels", "IDX test labels path"),
    ("--cifar-train", "cifar_train", "comma-separated CIFAR batch files"),
    ("--cifar-test", "cifar_test", "CIFAR test batch file"),
    ("--augment-cifar", "augment_cifar", "pad/crop/flip augmentation"),
    ("--checkpoint-every", "checkpoint_every", "epochs between checkpoints"),
]


def _add_config_flags(parser: argparse.ArgumentParser):
    for flag, key, help_text in _CONFIG_FLAGS:
        parser.add_argument(flag, dest=key, default=None, metavar="V",
                            help=help_text)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phsic",
        description="Backprop-free layer-wise training with kernel objectives",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training experiment")
    p_train.add_argument("--config", default=None, help="key=value config file")
    p_train.add_argument("--seed", type=int, required=True, help="run seed")
    p_train.add_argument("--out", default=None, help="output directory")
    p_train.add_argument("--resume", default=None, help="checkpoint to resume")
    p_train.add_argument("--quiet", action="store_true")
    _add_config_flags(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--images", required=True, help="IDX images path")
    p_eval.add_argument("--labels", required=True, help="IDX labels path")
    p_eval.add_argument("--cifar", action="store_true",
                        help="treat --images as a CIFAR binary (ignore --labels)")

    p_grad = sub.add_parser("gradcheck",
                            help="analytic vs finite-difference oracle suite")
    p_grad.add_argument("--seeds", type=int, default=20)
    p_grad.add_argument("--tolerance", type=float, default=1e-5)

    p_est = sub.add_parser("estimate",
                           help="dependence estimates of a dataset under a kernel")
    p_est.add_argument("--images", required=True)
    p_est.add_argument("--labels", required=True)
    p_est.add_argument("--kernel", default="gaussian")
    p_est.add_argument("--sigma", type=float, default=5.0)
    p_est.add_argument("--grouping", type=int, default=0)
    p_est.add_argument("--limit", type=int, default=256,
                       help="number of samples (kernel matrices are m x m)")

    p_stream = sub.add_parser("stream-demo",
                              help="online pairwise training with trace dump")
    p_stream.add_argument("--out", required=True, help="output directory")
    p_stream.add_argument("--steps", type=int, default=300)
    p_stream.add_argument("--seed", type=int, default=0)
    p_stream.add_argument("--sigma", type=float, default=2.0)
    p_stream.add_argument("--gamma", type=float, default=2.0)
    p_stream.add_argument("--lr", type=float, default=0.05)
    p_stream.add_argument("--grouping", type=int, default=4)
    p_stream.add_argument("--width", type=int, default=16)
    return parser


def _cmd_train(args) -> int:
    from .config import parse_config
    from .experiment import run_experiment

    overrides = {key: getattr(args, key) for _, key, _ in _CONFIG_FLAGS}
    overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    cfg = parse_config(args.config, overrides)
    result, paths = run_experiment(cfg, resume_path=args.resume,
                                   quiet=args.quiet)
    if result.records:
        last = result.records[-1]
        print(f"final: epoch {last.epoch} train {last.train_acc:.4f} "
              f"val {last.val_acc:.4f} test {last.test_acc:.4f}")
    for name, path in sorted(paths.items()):
        print(f"wrote {name}: {path}")
    return 0


def _cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .data import load_cifar10_binary, load_idx
    from .experiment import network_from_checkpoint
    from .trainer import evaluate

    ckpt = load_checkpoint(args.checkpoint)
    net = network_from_checkpoint(ckpt)
    if args.cifar:
        ds = load_cifar10_binary(args.images.split(","), split="eval")
    else:
        ds = load_idx(args.images, args.labels, split="eval")
    acc = evaluate(net, ds.images, ds.labels)
    print(f"accuracy: {acc:.4f} ({ds.n} samples)")
    return 0


def _cmd_gradcheck(args) -> int:
    from .oracles import standard_gradcheck_suite

    failed = False
    for name, rel, ab in standard_gradcheck_suite(seeds=range(args.seeds)):
        ok = rel < args.tolerance and ab < 1e-8
        failed |= not ok
        print(f"[{'PASS' if ok else 'FAIL'}] {name:18s} "
              f"max_rel={rel:.3e} max_abs_small={ab:.3e}")
    return 1 if failed else 0


def _cmd_estimate(args) -> int:
    from .data import load_idx
    from .kernels import (
        GroupingSpec, KernelFamily, KernelSpec, hsic_estimate,
        kernel_matrix, label_kernel_matrix, phsic_estimate,
    )

    families = {"gaussian": KernelFamily.GAUSSIAN,
                "cossim": KernelFamily.COSINE,
                "linear": KernelFamily.LINEAR}
    if args.kernel not in families:
        raise PhsicError(f"unknown kernel {args.kernel!r}")
    grouping = GroupingSpec(args.grouping) if args.grouping else None
    family = families[args.kernel]
    sigma = args.sigma if family is KernelFamily.GAUSSIAN else None
    spec = KernelSpec(family, sigma, grouping)
    ds = load_idx(args.images, args.labels, split="estimate")
    m = min(args.limit, ds.n)
    kz = kernel_matrix(spec, ds.images[:m])
    ky = label_kernel_matrix(ds.labels[:m], ds.n_classes)
    print(f"samples: {m}")
    print(f"pHSIC(Z,Z): {phsic_estimate(kz, kz):.6e}")
    print(f"pHSIC(Y,Z): {phsic_estimate(ky, kz):.6e}")
    print(f" HSIC(Z,Z): {hsic_estimate(kz, kz):.6e}")
    print(f" HSIC(Y,Z): {hsic_estimate(ky, kz):.6e}")
    return 0


def _cmd_stream_demo(args) -> int:
    from . import report
    from .kernels import GroupingSpec, KernelSpec
    from .network import Network, NetworkConfig
    from .numerics import make_rng
    from .online import PairwiseStreamTrainer

    rng = make_rng(args.seed)
    n_classes = 4
    dim = 8
    centers = rng.normal(size=(n_classes, dim))
    grouping = GroupingSpec(args.grouping) if args.grouping else None
    net_cfg = NetworkConfig((dim, args.width), n_classes=n_classes,
                            grouping=grouping)
    net = Network.build(net_cfg, rng)
    spec = KernelSpec.gaussian(args.sigma, grouping)
    trace: list = []
    trainer = PairwiseStreamTrainer(net, spec, n_classes, args.gamma,
                                    args.lr, trace=trace)
    for _ in range(args.steps):
        label = int(rng.integers(0, n_classes))
        trainer.step(centers[label] + 0.3 * rng.normal(size=dim), label)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = report.write_stream_trace_csv(trace, out / "stream_trace.csv")
    fig_path = report.render_stream_trace_figure(trace, out / "stream_trace.png")
    print(f"wrote {csv_path}")
    print(f"wrote {fig_path}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
    "estimate": _cmd_estimate,
    "stream-demo": _cmd_stream_demo,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except PhsicError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
