"""Versioned named-tensor checkpoints (bit-exact round trip)."""

from __future__ import annotations

import json

import numpy as np

from .model import ModelConfig
from .numerics import InputError, LossMode, ParameterSet, Partition

FORMAT_VERSION = 1


def save_checkpoint(path, params: ParameterSet, config: ModelConfig) -> None:
    meta = {
        "version": FORMAT_VERSION,
        "partitions": {n: p.value for n, p in params.partitions.items()},
        "config": {
            "input_dim": config.input_dim,
            "encoder_dims": list(config.encoder_dims),
            "num_classes": config.num_classes,
            "architecture": config.architecture,
            "nm_hidden_dim": config.nm_hidden_dim,
            "loss_mode": config.loss_mode.value,
        },
    }
    arrays = {f"tensor/{n}": t for n, t in params.tensors.items()}
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Returns (ParameterSet, ModelConfig). Optimizer state is not persisted."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        if meta["version"] != FORMAT_VERSION:
            raise InputError(f"unsupported checkpoint version {meta['version']}")
        tensors = {k[len("tensor/"):]: data[k] for k in data.files if k.startswith("tensor/")}
    partitions = {n: Partition(p) for n, p in meta["partitions"].items()}
    c = meta["config"]
    config = ModelConfig(
        input_dim=c["input_dim"],
        encoder_dims=tuple(c["encoder_dims"]),
        num_classes=c["num_classes"],
        architecture=c["architecture"],
        nm_hidden_dim=c["nm_hidden_dim"],
        loss_mode=LossMode(c["loss_mode"]),
    )
    return ParameterSet(tensors, partitions), config
