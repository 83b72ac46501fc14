"""Adam with decoupled weight decay, plus the parameter checkpoint container."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"AFG1"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-4


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              hyper: AdamHyper = AdamHyper()) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam update; weight decay is applied directly to the parameters (not the gradient).

    Inputs are left untouched; new parameter and state objects are returned.
    """
    t = state.step + 1
    bc1 = 1.0 - hyper.beta1 ** t
    bc2 = 1.0 - hyper.beta2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
        m = hyper.beta1 * state.m.get(name, np.zeros_like(p)) + (1.0 - hyper.beta1) * g
        v = hyper.beta2 * state.v.get(name, np.zeros_like(p)) + (1.0 - hyper.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + hyper.eps)
        new_params[name] = p - hyper.lr * update - hyper.lr * hyper.weight_decay * p
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(t, new_m, new_v)


def save_checkpoint(path, params: dict[str, np.ndarray], metadata: dict | None = None) -> None:
    """Binary tensors (little-endian, float64) plus a ``<path>.json`` metadata file."""
    path = Path(path)
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(params))]
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        key = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(key)) + key)
        chunks.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes())
    path.write_bytes(b"".join(chunks))
    meta = dict(metadata or {})
    meta.setdefault("format", "AFG1")
    meta.setdefault("version", FORMAT_VERSION)
    path.with_name(path.name + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not an AFG1 checkpoint")
    try:
        version, count = struct.unpack_from("<II", data, 4)
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        pos = 12
        params = {}
        for _ in range(count):
            (klen,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos: pos + klen].decode("utf-8")
            pos += klen
            (ndim,) = struct.unpack_from("<I", data, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}Q", data, pos)
            pos += 8 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * size > len(data):
                raise ValueError(f"{path}: truncated tensor {name!r}")
            params[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
            pos += 8 * size
    except struct.error as exc:
        raise ValueError(f"{path}: truncated checkpoint") from exc
    meta_path = path.with_name(path.name + ".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return params, meta
