"""Checkpoint file: magic + JSON header + flat little-endian parameter blob.

The header pins the format version, the model config, the vocabulary hash and
the training-config digest; the blob holds parameters followed by optimizer
moments. save(load(path)) reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import CheckpointError
from .net import ModelParameters, NetConfig

MAGIC = b"GVCKPT01"
FORMAT_VERSION = 1

_LE = {"float32": "<f4", "float64": "<f8"}


@dataclass
class TrainerState:
    params: ModelParameters
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    adam_step: int
    epoch: int
    rng_state: dict
    loss_stats: dict = field(default_factory=dict)


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _jsonable_rng_state(state) -> dict:
    def fix(v):
        if isinstance(v, dict):
            return {k: fix(x) for k, x in v.items()}
        if isinstance(v, (np.integer,)):
            return int(v)
        return v

    return fix(state)


def save_trainer(
    path: str | Path,
    state: TrainerState,
    vocab_hash: str,
    train_config_digest: Optional[str] = None,
    train_meta: Optional[dict] = None,
) -> None:
    cfg = state.params.cfg
    names = state.params.names()
    arrays = []
    blobs = []
    for section, table in (
        ("params", state.params.arrays),
        ("adam_m", state.adam_m),
        ("adam_v", state.adam_v),
    ):
        for name in names:
            arr = table[name]
            arrays.append(
                {"section": section, "name": name, "shape": list(arr.shape), "dtype": str(arr.dtype)}
            )
            blobs.append(np.ascontiguousarray(arr, dtype=_LE[str(arr.dtype)]).tobytes())

    header = {
        "format_version": FORMAT_VERSION,
        "net_config": cfg.to_dict(),
        "vocab_hash": vocab_hash,
        "train_config_digest": train_config_digest,
        "train_meta": train_meta or {},
        "epoch": state.epoch,
        "adam_step": state.adam_step,
        "rng_state": _jsonable_rng_state(state.rng_state),
        "loss_stats": state.loss_stats,
        "arrays": arrays,
    }
    hbytes = _canonical(header)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(hbytes)))
        f.write(hbytes)
        for b in blobs:
            f.write(b)


def read_header(path: str | Path) -> dict:
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        (hlen,) = struct.unpack("<Q", f.read(8))
        return json.loads(f.read(hlen))


def load_trainer(
    path: str | Path,
    expected_vocab_hash: Optional[str] = None,
    expected_train_digest: Optional[str] = None,
) -> tuple[TrainerState, dict]:
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen))
        if header["format_version"] != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: format version {header['format_version']} unsupported "
                f"(expected {FORMAT_VERSION})"
            )
        if expected_vocab_hash is not None and header["vocab_hash"] != expected_vocab_hash:
            raise CheckpointError(
                f"{path}: vocabulary hash mismatch: checkpoint {header['vocab_hash'][:12]}..., "
                f"expected {expected_vocab_hash[:12]}..."
            )
        if (
            expected_train_digest is not None
            and header["train_config_digest"] != expected_train_digest
        ):
            raise CheckpointError(
                f"{path}: training config digest mismatch; refusing to resume"
            )

        sections: dict[str, dict[str, np.ndarray]] = {"params": {}, "adam_m": {}, "adam_v": {}}
        for meta in header["arrays"]:
            n = int(np.prod(meta["shape"])) if meta["shape"] else 1
            raw = f.read(n * np.dtype(_LE[meta["dtype"]]).itemsize)
            arr = np.frombuffer(raw, dtype=_LE[meta["dtype"]]).reshape(meta["shape"])
            sections[meta["section"]][meta["name"]] = arr.astype(meta["dtype"])

    cfg = NetConfig.from_dict(header["net_config"])
    state = TrainerState(
        params=ModelParameters(cfg, sections["params"]),
        adam_m=sections["adam_m"],
        adam_v=sections["adam_v"],
        adam_step=header["adam_step"],
        epoch=header["epoch"],
        rng_state=header["rng_state"],
        loss_stats=header["loss_stats"],
    )
    return state, header
