"""Checkpoint I/O: the binary container with one float32 tensor per parameter."""

from __future__ import annotations

import hashlib

import numpy as np
import torch

from .artifacts import CHECKPOINT_MAGIC, read_container, write_container
from .bpe import BpeVocab
from .errors import MalformedArtifact
from .model import DualEncoder, ModelConfig


def save_checkpoint(path, model: DualEncoder, vocab: BpeVocab, extra: dict | None = None) -> dict:
    tensors, arrays, offset = [], [], 0
    for name, p in model.named_parameters():
        arr = p.detach().cpu().numpy().astype("<f4")
        tensors.append({"name": name, "shape": list(arr.shape), "frozen": not p.requires_grad,
                        "offset": offset, "count": int(arr.size)})
        arrays.append(arr)
        offset += arr.size * 4
    header = {
        "format": 1,
        "model_config": model.cfg.to_dict(),
        "vocab": vocab.to_dict(),
        "tensors": tensors,
        **(extra or {}),
    }
    write_container(path, CHECKPOINT_MAGIC, header, arrays)
    return header


def load_checkpoint(path) -> tuple[DualEncoder, BpeVocab, dict]:
    header, payload = read_container(path, CHECKPOINT_MAGIC)
    model = DualEncoder(ModelConfig.from_dict(header["model_config"]))
    params = dict(model.named_parameters())
    with torch.no_grad():
        for t in header["tensors"]:
            if t["name"] not in params:
                raise MalformedArtifact(f"{path}: unknown tensor {t['name']}")
            arr = np.frombuffer(payload, dtype="<f4", count=t["count"], offset=t["offset"])
            params[t["name"]].copy_(torch.from_numpy(arr.reshape(t["shape"]).copy()))
    return model, BpeVocab.from_dict(header["vocab"]), header


def frozen_checksum(model: DualEncoder) -> str:
    """sha256 over every frozen tensor's bytes, in parameter order."""
    h = hashlib.sha256()
    for name, p in model.frozen_parameters():
        h.update(name.encode())
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()
