"""Text checkpoint: a JSON header line, then one base64 line per float64 array."""
from __future__ import annotations

import base64
import json

import numpy as np

from ..features import SchemaMismatch
from .model import ModelParams

MAGIC = "I2BGNN-CHECKPOINT"
VERSION = 1


def save_checkpoint(path, params: ModelParams, schema_hash: str, variant: str,
                    hyperparameters: dict | None = None, extra: dict | None = None) -> None:
    arrays = params.arrays()
    header = {
        "format_version": VERSION,
        "shapes": {k: list(v.shape) for k, v in arrays.items()},
        "schema_hash": schema_hash,
        "variant": variant,
        "hyperparameters": hyperparameters or {},
        "extra": extra or {},
    }
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{MAGIC} {VERSION}\n")
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for name, arr in arrays.items():
            raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
            fh.write(f"{name} {base64.b64encode(raw).decode('ascii')}\n")


def load_checkpoint(path, expect_schema_hash: str | None = None) -> tuple[ModelParams, dict]:
    with open(path, encoding="ascii") as fh:
        magic = fh.readline().split()
        if len(magic) != 2 or magic[0] != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        if int(magic[1]) != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {magic[1]}")
        header = json.loads(fh.readline())
        arrays = {}
        for line in fh:
            if not line.strip():
                continue
            name, payload = line.split()
            shape = tuple(header["shapes"][name])
            arrays[name] = np.frombuffer(base64.b64decode(payload), dtype="<f8").astype(np.float64).reshape(shape)
    if expect_schema_hash is not None and header["schema_hash"] != expect_schema_hash:
        raise SchemaMismatch(
            f"feature schema hash mismatch: checkpoint {header['schema_hash']}, bundle {expect_schema_hash}"
        )
    params = ModelParams(**arrays)
    params.check()
    return params, header
