"""Single-file checkpoints: every parameter by name plus the shared codebook."""

from __future__ import annotations

import json

import numpy as np

from ..nn import Module
from .common import CommunicationQuantizer

CHECKPOINT_VERSION = 1


def save_checkpoint(path, model: Module, quantizer: CommunicationQuantizer | None = None, extra: dict | None = None) -> None:
    params = model.parameters()
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate parameter names in model: {sorted(names)}")
    header = {
        "version": CHECKPOINT_VERSION,
        "parameters": names,
        "extra": extra or {},
    }
    arrays = {f"param/{p.name}": p.data for p in params}
    if quantizer is not None:
        cfg = quantizer.config
        header["quantizer"] = {
            "L": cfg.L,
            "G": cfg.G,
            "m": cfg.m,
            "beta": cfg.beta,
            "codebook_loss_weight": cfg.codebook_loss_weight,
            "method": quantizer.method,
            "initialized": quantizer.codebook.initialized,
        }
        arrays["codebook/entries"] = quantizer.codebook.entries.data
    np.savez(path, __header__=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path) -> dict:
    """Return {'header', 'params': name -> array, 'codebook': array | None}."""
    with np.load(path) as data:
        header = json.loads(bytes(data["__header__"]).decode())
        if header["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        params = {name: data[f"param/{name}"].copy() for name in header["parameters"]}
        codebook = data["codebook/entries"].copy() if "codebook/entries" in data else None
    return {"header": header, "params": params, "codebook": codebook}


def restore_into(model: Module, quantizer: CommunicationQuantizer | None, payload: dict) -> None:
    """Write checkpoint arrays back into an architecture-matched model."""
    by_name = {p.name: p for p in model.parameters()}
    if set(by_name) != set(payload["params"]):
        missing = set(payload["params"]) ^ set(by_name)
        raise ValueError(f"checkpoint/model parameter mismatch: {sorted(missing)}")
    for name, array in payload["params"].items():
        p = by_name[name]
        if p.data.shape != array.shape:
            raise ValueError(f"shape mismatch for {name}: {p.data.shape} vs {array.shape}")
        p.data[...] = array
    if quantizer is not None and payload["codebook"] is not None:
        quantizer.codebook.set_entries(payload["codebook"])
        quantizer.codebook.initialized = payload["header"]["quantizer"]["initialized"]
