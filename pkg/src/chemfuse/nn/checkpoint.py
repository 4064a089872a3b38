"""Checkpoint format: a JSON manifest plus one little-endian float64 blob.

A checkpoint is a directory holding ``manifest.json`` (tensor names, shapes
and byte offsets, a config echo, the seed, and the step count) and
``params.bin``. Serialization is canonical (sorted keys, no timestamps) so
identical training runs produce byte-identical checkpoints.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tensor import Parameter

FORMAT_TAG = "chemfuse-checkpoint-v1"


def save_checkpoint(path: str | Path, params: dict[str, Parameter],
                    config: dict, seed: int, step: int) -> None:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    blob = bytearray()
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name].data, dtype="<f8")
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "offset": len(blob),
        })
        blob.extend(arr.tobytes())
    manifest = {
        "format": FORMAT_TAG,
        "seed": seed,
        "step": step,
        "config": config,
        "tensors": entries,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    (out / "params.bin").write_bytes(bytes(blob))


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a checkpoint; validates shapes/offsets against the blob."""
    root = Path(path)
    manifest = json.loads((root / "manifest.json").read_text())
    if manifest.get("format") != FORMAT_TAG:
        raise ValueError(f"not a {FORMAT_TAG} checkpoint: {path}")
    blob = (root / "params.bin").read_bytes()
    tensors: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        start = entry["offset"]
        end = start + count * 8
        if end > len(blob):
            raise ValueError(f"tensor {entry['name']!r} overruns the blob")
        arr = np.frombuffer(blob[start:end], dtype="<f8").reshape(shape).copy()
        tensors[entry["name"]] = arr
    return manifest, tensors


def restore_into(params: dict[str, Parameter], tensors: dict[str, np.ndarray]) -> None:
    """Copy loaded arrays into live parameters, validating names and shapes."""
    missing = sorted(set(params) - set(tensors))
    extra = sorted(set(tensors) - set(params))
    if missing or extra:
        raise ValueError(f"checkpoint mismatch: missing={missing} extra={extra}")
    for name, param in params.items():
        if tensors[name].shape != param.data.shape:
            raise ValueError(
                f"shape mismatch for {name!r}: "
                f"{tensors[name].shape} vs {param.data.shape}")
        param.data = tensors[name].astype(np.float64)
