"""Versioned binary checkpoints with bitwise round-trip guarantees.

Layout (little endian): an 8-byte magic string, a u32 format version, then
five length-prefixed sections in fixed order:

    1. config JSON (utf-8)            - the resolved run configuration echo
    2. state JSON                     - epoch counter and RNG state
    3. hidden weights                 - u32 count, then rows/cols/f64 data each
    4. readout                        - weight matrix then bias vector
    5. velocities                     - same shapes as sections 3 + 4

Floats are serialized with ``tobytes`` so load(save(x)) is bit-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"PHSICKPT"
VERSION = 1


@dataclass
class Checkpoint:
    config: dict
    epoch: int  # number of completed epochs
    rng_state: dict
    weights: list  # hidden layer matrices
    readout_w: np.ndarray
    readout_b: np.ndarray
    vel_weights: list
    vel_readout_w: np.ndarray
    vel_readout_b: np.ndarray


def _pack_matrix(a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    return struct.pack("<II", a.shape[0], a.shape[1]) + a.tobytes()


def _pack_matrices(mats) -> bytes:
    blob = struct.pack("<I", len(mats))
    for m in mats:
        blob += _pack_matrix(m)
    return blob


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(
                f"{self.path}: section overruns file "
                f"(need {n} bytes at offset {self.pos})"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def section(self) -> bytes:
        return self.take(self.u64())


def _unpack_matrix(r: _Reader) -> np.ndarray:
    rows, cols = struct.unpack("<II", r.take(8))
    data = r.take(rows * cols * 8)
    return np.frombuffer(data, dtype=np.float64).reshape(rows, cols).copy()


def _unpack_matrices(blob: bytes, path) -> list:
    r = _Reader(blob, path)
    count = r.u32()
    mats = [_unpack_matrix(r) for _ in range(count)]
    if r.pos != len(blob):
        raise CheckpointError(f"{path}: trailing bytes in matrix section")
    return mats


def save_checkpoint(ckpt: Checkpoint, path):
    path = Path(path)
    sections = [
        json.dumps(ckpt.config, sort_keys=True).encode(),
        json.dumps({"epoch": ckpt.epoch, "rng_state": ckpt.rng_state},
                   sort_keys=True).encode(),
        _pack_matrices(ckpt.weights),
        _pack_matrices([ckpt.readout_w, ckpt.readout_b]),
        _pack_matrices(list(ckpt.vel_weights)
                       + [ckpt.vel_readout_w, ckpt.vel_readout_b]),
    ]
    blob = MAGIC + struct.pack("<I", VERSION)
    for section in sections:
        blob += struct.pack("<Q", len(section)) + section
    path.write_bytes(blob)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < len(MAGIC) + 4 or data[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    r = _Reader(data, path)
    r.take(len(MAGIC))
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(
            f"{path}: format version {version}, this build reads {VERSION}"
        )
    config = json.loads(r.section().decode())
    state = json.loads(r.section().decode())
    weights = _unpack_matrices(r.section(), path)
    readout = _unpack_matrices(r.section(), path)
    velocities = _unpack_matrices(r.section(), path)
    if r.pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - r.pos} trailing bytes")
    if len(readout) != 2 or len(velocities) != len(weights) + 2:
        raise CheckpointError(f"{path}: inconsistent section contents")
    return Checkpoint(
        config=config,
        epoch=state["epoch"],
        rng_state=state["rng_state"],
        weights=weights,
        readout_w=readout[0],
        readout_b=readout[1].reshape(-1),
        vel_weights=velocities[:-2],
        vel_readout_w=velocities[-2],
        vel_readout_b=velocities[-1].reshape(-1),
    )
