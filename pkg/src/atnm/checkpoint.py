"""Checkpoint container: named parameter tensors plus run metadata.

Layout (little-endian): magic "ATNM", u32 format version, u32 header
length, UTF-8 JSON header {variant, params: [{name, shape}...], meta},
then the raw float32 parameter data concatenated in header order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError
from .nn import Module

MAGIC = b"ATNM"
VERSION = 1


@dataclass
class Checkpoint:
    variant: str
    params: dict  # name -> float32 ndarray, insertion-ordered
    meta: dict = field(default_factory=dict)


def checkpoint_from_model(model: Module, variant: str, meta: dict | None = None) -> Checkpoint:
    params = {p.name: p.data.astype(np.float32) for p in model.parameters()}
    return Checkpoint(variant=variant, params=params, meta=dict(meta or {}))


def load_into_model(ckpt: Checkpoint, model: Module) -> None:
    """Copy checkpoint values into a freshly built model of the same variant."""
    targets = model.param_dict()
    if set(targets) != set(ckpt.params):
        missing = sorted(set(targets) ^ set(ckpt.params))
        raise FormatError(f"checkpoint/model parameter names disagree: {missing}")
    for name, value in ckpt.params.items():
        p = targets[name]
        if tuple(value.shape) != tuple(p.data.shape):
            raise FormatError(
                f"parameter '{name}' has shape {value.shape}, model expects {p.data.shape}"
            )
        p.data = value.astype(np.float64)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    header = {
        "variant": ckpt.variant,
        "params": [{"name": n, "shape": list(v.shape)} for n, v in ckpt.params.items()],
        "meta": ckpt.meta,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(Path(path), "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for value in ckpt.params.values():
            fh.write(np.ascontiguousarray(value, dtype="<f4").tobytes())


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated header at offset 0")
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r} at offset 0")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version} at offset 4")
    (header_len,) = struct.unpack_from("<I", raw, 8)
    if len(raw) < 12 + header_len:
        raise FormatError(f"{path}: truncated JSON header at offset 12")
    try:
        header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: invalid JSON header at offset 12 ({exc})") from exc
    for key in ("variant", "params", "meta"):
        if key not in header:
            raise FormatError(f"{path}: header missing '{key}'")
    offset = 12 + header_len
    params = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        if len(raw) < offset + nbytes:
            raise FormatError(
                f"{path}: parameter '{entry['name']}' truncated at offset {offset}"
            )
        params[entry["name"]] = (
            np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shape).copy()
        )
        offset += nbytes
    if offset != len(raw):
        raise FormatError(
            f"{path}: {len(raw) - offset} trailing bytes at offset {offset}"
        )
    return Checkpoint(variant=header["variant"], params=params, meta=header["meta"])
