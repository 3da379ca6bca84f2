"""Run reporting: metrics CSV, JSON summary, and rendered figures.

CSV header (one row per epoch):
    epoch,train_acc,val_acc,test_acc,
    layer{i}_phsic_zz,layer{i}_phsic_yz (for i = 1..L),seconds
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def metrics_header(n_layers: int) -> list:
    header = ["epoch", "train_acc", "val_acc", "test_acc"]
    for i in range(1, n_layers + 1):
        header += [f"layer{i}_phsic_zz", f"layer{i}_phsic_yz"]
    header.append("seconds")
    return header


def write_metrics_csv(records, n_layers: int, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(metrics_header(n_layers))
        for rec in records:
            row = [rec.epoch, repr(rec.train_acc), repr(rec.val_acc),
                   repr(rec.test_acc)]
            for zz, yz in zip(rec.layer_zz, rec.layer_yz):
                row += [repr(zz), repr(yz)]
            row.append(f"{rec.seconds:.3f}")
            writer.writerow(row)
    return path


def write_summary_json(config_echo: dict, records, path) -> Path:
    path = Path(path)
    summary = {"config": config_echo, "epochs_run": len(records)}
    if records:
        last = records[-1]
        summary["final"] = {
            "epoch": last.epoch,
            "train_acc": last.train_acc,
            "val_acc": last.val_acc,
            "test_acc": last.test_acc,
            "layer_phsic_zz": list(last.layer_zz),
            "layer_phsic_yz": list(last.layer_yz),
        }
        summary["best_test_acc"] = max(r.test_acc for r in records)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return path


def render_accuracy_figure(records, path) -> Path:
    path = Path(path)
    epochs = [r.epoch for r in records]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [r.train_acc for r in records], label="train")
    ax.plot(epochs, [r.val_acc for r in records], label="validation")
    ax.plot(epochs, [r.test_acc for r in records], label="test")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_objective_figure(records, path) -> Path:
    """Per-layer local objective terms over epochs (skipped values allowed)."""
    path = Path(path)
    epochs = [r.epoch for r in records]
    n_layers = len(records[0].layer_zz) if records else 0
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for i in range(n_layers):
        axes[0].plot(epochs, [r.layer_zz[i] for r in records], label=f"layer {i + 1}")
        axes[1].plot(epochs, [r.layer_yz[i] for r in records], label=f"layer {i + 1}")
    axes[0].set_title("activity-activity term")
    axes[1].set_title("label-activity term")
    for ax in axes:
        ax.set_xlabel("epoch")
        ax.grid(alpha=0.3)
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


STREAM_TRACE_HEADER = ["t", "b1", "b2", "b3", "M", "dw_norm"]


def write_stream_trace_csv(rows, path) -> Path:
    """Per-step circuit trace: (t, b1, b2, b3, M, ||dW||)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(STREAM_TRACE_HEADER)
        for row in rows:
            writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    return path


def render_stream_trace_figure(rows, path) -> Path:
    path = Path(path)
    ts = [row[0] for row in rows]
    fig, axes = plt.subplots(3, 1, figsize=(7, 7), sharex=True)
    axes[0].plot(ts, [row[1] for row in rows], label="b1")
    axes[1].plot(ts, [row[2] for row in rows], label="b2")
    axes[1].plot(ts, [row[3] for row in rows], label="b3")
    axes[2].plot(ts, [row[4] for row in rows], label="third factor")
    axes[2].plot(ts, [row[5] for row in rows], label="|dW|")
    for ax in axes:
        ax.legend(loc="upper right")
        ax.grid(alpha=0.3)
    axes[2].set_xlabel("step")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
