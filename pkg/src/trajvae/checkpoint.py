"""Checkpoint container: a single .npz archive holding parameter blobs plus a
JSON metadata entry.

Layout (readable from any language with zip + npy support):
  __meta__     uint8 array of UTF-8 JSON bytes with keys
               {"version", "step", "model_config", "config", "parameters"}
               where "parameters" maps each blob name to its shape
  param/<name> one float array per model parameter or buffer, named after the
               model state dict
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .errors import DataError
from .vae import ModelConfig, TrajectoryVAE

CHECKPOINT_VERSION = 1


def save_checkpoint(path, model: TrajectoryVAE, step: int, config_echo: dict | None = None) -> None:
    state = model.state_dict()
    arrays = {f"param/{name}": tensor.detach().cpu().numpy() for name, tensor in state.items()}
    meta = {
        "version": CHECKPOINT_VERSION,
        "step": int(step),
        "model_config": model.config.to_dict(),
        "config": config_echo,
        "parameters": {name: list(t.shape) for name, t in state.items()},
    }
    meta_bytes = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=meta_bytes, **arrays)


def load_checkpoint(path) -> tuple[TrajectoryVAE, dict]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"checkpoint not found: {p}")
    with np.load(p, allow_pickle=False) as archive:
        if "__meta__" not in archive:
            raise DataError(f"{p} is not a checkpoint: missing __meta__ entry")
        meta = json.loads(bytes(archive["__meta__"].tobytes()).decode("utf-8"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version {meta.get('version')}")
        model = TrajectoryVAE(ModelConfig.from_dict(meta["model_config"]))
        state = {}
        for name in meta["parameters"]:
            key = f"param/{name}"
            if key not in archive:
                raise DataError(f"checkpoint missing parameter blob {name!r}")
            state[name] = torch.as_tensor(archive[key])
    model.load_state_dict(state)
    model.eval()
    return model, meta
