"""Checkpoints: a JSON manifest plus a raw little-endian float64 blob."""
from __future__ import annotations

import json
from collections import OrderedDict
from pathlib import Path

import numpy as np
import torch
from torch import nn


class CheckpointError(ValueError):
    pass


def blob_path(manifest: str | Path) -> Path:
    return Path(manifest).with_suffix(".bin")


def save_checkpoint(params: nn.Module | dict, path: str | Path, extra: dict | None = None) -> Path:
    """Write ``path`` (manifest) and ``path.with_suffix('.bin')`` (blob).

    ``params`` is a module (its named parameters are saved) or a name->tensor
    mapping. ``extra`` entries (e.g. the model config) go into the manifest.
    """
    if isinstance(params, nn.Module):
        params = OrderedDict((k, v.detach()) for k, v in params.named_parameters())
    path = Path(path)
    entries, chunks, offset = [], [], 0
    for name, value in params.items():
        arr = np.ascontiguousarray(torch.as_tensor(value).detach().cpu().numpy(), dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.size
    manifest = {"params": entries, "dtype": "f64", "endianness": "little", "blob": blob_path(path).name}
    if extra:
        manifest.update(extra)
    blob_path(path).write_bytes(b"".join(chunks))
    path.write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return path


def load_checkpoint(path: str | Path) -> tuple["OrderedDict[str, torch.Tensor]", dict]:
    path = Path(path)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
        entries = manifest["params"]
        if manifest.get("dtype") != "f64" or manifest.get("endianness") != "little":
            raise CheckpointError("unsupported dtype/endianness")
        names = [e["name"] for e in entries]
        shapes = [tuple(int(d) for d in e["shape"]) for e in entries]
        offsets = [int(e["offset"]) for e in entries]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"corrupt manifest {path}: {exc}") from None
    if len(set(names)) != len(names):
        raise CheckpointError("corrupt manifest: duplicate parameter names")
    blob = path.parent / manifest.get("blob", blob_path(path).name)
    data = np.frombuffer(blob.read_bytes(), dtype="<f8")
    expected = sum(int(np.prod(s)) for s in shapes)
    if data.size * 8 != blob.stat().st_size or data.size != expected:
        raise CheckpointError(f"blob length mismatch: {blob.stat().st_size} bytes, manifest needs {expected * 8}")
    params: OrderedDict[str, torch.Tensor] = OrderedDict()
    running = 0
    for name, shape, offset in zip(names, shapes, offsets):
        size = int(np.prod(shape))
        if offset != running:
            raise CheckpointError(f"corrupt manifest: offset of {name} is {offset}, expected {running}")
        params[name] = torch.from_numpy(data[offset : offset + size].astype(np.float64).reshape(shape))
        running += size
    return params, manifest


def load_into(model: nn.Module, params: dict) -> nn.Module:
    """Copy ``params`` into ``model``; names and shapes must match exactly."""
    own = dict(model.named_parameters())
    missing = sorted(set(own) - set(params))
    extra = sorted(set(params) - set(own))
    if missing:
        raise CheckpointError(f"checkpoint is missing parameter(s): {', '.join(missing)}")
    if extra:
        raise CheckpointError(f"checkpoint has unexpected parameter(s): {', '.join(extra)}")
    for name, p in own.items():
        if tuple(params[name].shape) != tuple(p.shape):
            raise CheckpointError(
                f"shape mismatch for parameter {name}: checkpoint {tuple(params[name].shape)} vs model {tuple(p.shape)}"
            )
    with torch.no_grad():
        for name, p in own.items():
            p.copy_(params[name])
    return model
