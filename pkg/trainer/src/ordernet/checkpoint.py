"""Checkpoints: flat named-tensor .npz archive plus a JSON manifest."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from .model import ModelConfig, OrderPolicyNet, ValueNet

FORMAT_VERSION = 1


def _digest(payload: str) -> str:
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def save_checkpoint(path, policy, value, model_config, extra=None):
    """Write <path>.npz (tensors) and <path>.json (manifest)."""
    path = Path(path)
    arrays = {}
    for prefix, module in (("policy", policy), ("value", value)):
        for name, tensor in module.state_dict().items():
            arrays[f"{prefix}.{name}"] = tensor.detach().cpu().numpy()
    np.savez(str(path.with_suffix(".npz")), **arrays)
    manifest = {
        "format_version": FORMAT_VERSION,
        "model_config": {
            "n_cells": model_config.n_cells,
            "d": model_config.d,
            "layers": model_config.layers,
            "heads": model_config.heads,
        },
        "shapes": {k: list(v.shape) for k, v in arrays.items()},
        "config_digest": _digest(
            json.dumps(
                {
                    "n_cells": model_config.n_cells,
                    "d": model_config.d,
                    "layers": model_config.layers,
                    "heads": model_config.heads,
                },
                sort_keys=True,
            )
        ),
        "extra": extra or {},
    }
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_checkpoint(path):
    """Return (policy, value, model_config, manifest)."""
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    if manifest["format_version"] != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {manifest['format_version']}")
    mc = ModelConfig(**manifest["model_config"])
    policy = OrderPolicyNet(mc)
    value = ValueNet(mc)
    arrays = np.load(str(path.with_suffix(".npz")))
    for key, want in manifest["shapes"].items():
        if list(arrays[key].shape) != want:
            raise ValueError(f"shape mismatch for {key}")
    for prefix, module in (("policy", policy), ("value", value)):
        state = {
            k[len(prefix) + 1 :]: torch.from_numpy(arrays[k])
            for k in arrays.files
            if k.startswith(prefix + ".")
        }
        module.load_state_dict(state)
    return policy, value, mc, manifest
