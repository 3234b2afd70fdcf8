"""Deterministic checkpoint serialization.

A checkpoint is a single self-describing binary file: magic + version line,
a canonical JSON tree describing the saved structure (tensors replaced by
payload indices), the raw tensor bytes, and a trailing SHA-256 over everything
before it. Canonical encoding makes save -> load -> save byte-identical, which
the training-resume and service tests rely on.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import torch

MAGIC = b"STAINEDIT-CKPT\n"
FORMAT_VERSION = 1


class CheckpointIntegrityError(RuntimeError):
    """File is corrupt, truncated, or not a checkpoint at all."""


class CheckpointVersionError(RuntimeError):
    """File is a checkpoint written by an incompatible format version."""


def _encode(obj: Any, tensors: list[torch.Tensor]) -> Any:
    """Replace tensors by payload indices; keep key/collection types explicit."""
    if isinstance(obj, torch.Tensor):
        tensors.append(obj.detach().cpu().contiguous())
        return {"__t__": len(tensors) - 1}
    if isinstance(obj, dict):
        return {"__d__": [[_encode(k, tensors), _encode(v, tensors)] for k, v in obj.items()]}
    if isinstance(obj, tuple):
        return {"__tu__": [_encode(v, tensors) for v in obj]}
    if isinstance(obj, list):
        return {"__l__": [_encode(v, tensors) for v in obj]}
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return {"__v__": obj}
    raise TypeError(f"cannot checkpoint object of type {type(obj).__name__}")


def _decode(node: Any, tensors: list[torch.Tensor]) -> Any:
    (tag, value), = node.items()
    if tag == "__t__":
        return tensors[value]
    if tag == "__d__":
        return {_decode(k, tensors): _decode(v, tensors) for k, v in value}
    if tag == "__tu__":
        return tuple(_decode(v, tensors) for v in value)
    if tag == "__l__":
        return [_decode(v, tensors) for v in value]
    if tag == "__v__":
        return value
    raise CheckpointIntegrityError(f"unknown node tag {tag!r}")


def save_checkpoint(path: Path | str, state: dict) -> None:
    """Serialize a (JSON-able + tensors) state tree to ``path``."""
    tensors: list[torch.Tensor] = []
    tree = _encode(state, tensors)
    specs = []
    blobs = []
    for t in tensors:
        arr = t.numpy()
        specs.append([arr.dtype.str, list(arr.shape)])
        blobs.append(arr.tobytes())
    header = json.dumps({"tree": tree, "tensors": specs}, separators=(",", ":")).encode()

    buf = bytearray()
    buf += MAGIC
    buf += f"v{FORMAT_VERSION}\n".encode()
    buf += struct.pack("<Q", len(header))
    buf += header
    for blob in blobs:
        buf += blob
    buf += hashlib.sha256(buf).digest()
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path: Path | str) -> dict:
    """Parse, verify and rebuild a checkpoint; never partially applies."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 32 or not raw.startswith(MAGIC):
        raise CheckpointIntegrityError(f"{path} is not a checkpoint file")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointIntegrityError(f"{path} failed its integrity check")

    offset = len(MAGIC)
    newline = body.index(b"\n", offset)
    version_line = body[offset:newline].decode()
    if version_line != f"v{FORMAT_VERSION}":
        raise CheckpointVersionError(
            f"{path} has format {version_line}, this build reads v{FORMAT_VERSION}"
        )
    offset = newline + 1
    (header_len,) = struct.unpack_from("<Q", body, offset)
    offset += 8
    try:
        header = json.loads(body[offset : offset + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointIntegrityError(f"{path} has an unreadable header") from exc
    offset += header_len

    tensors = []
    for dtype_str, shape in header["tensors"]:
        arr = np.zeros(shape, dtype=np.dtype(dtype_str))
        nbytes = arr.nbytes
        if offset + nbytes > len(body):
            raise CheckpointIntegrityError(f"{path} tensor payload is truncated")
        flat = np.frombuffer(body, dtype=np.dtype(dtype_str), count=arr.size, offset=offset)
        tensors.append(torch.from_numpy(flat.reshape(shape).copy()))
        offset += nbytes
    if offset != len(body):
        raise CheckpointIntegrityError(f"{path} has trailing bytes after the tensor payload")
    return _decode(header["tree"], tensors)


@dataclass
class Checkpoint:
    """Typed view over the state tree saved during training."""

    step: int
    models: dict  # name -> state_dict
    optimizers: dict  # name -> optimizer state_dict
    rng: dict  # name -> torch.Generator state tensor
    config: dict  # snapshot of net/train/loss configuration

    def to_state(self) -> dict:
        return {
            "step": self.step,
            "models": self.models,
            "optimizers": self.optimizers,
            "rng": self.rng,
            "config": self.config,
        }

    @classmethod
    def from_state(cls, state: dict) -> "Checkpoint":
        return cls(
            step=state["step"],
            models=state["models"],
            optimizers=state["optimizers"],
            rng=state["rng"],
            config=state["config"],
        )

    def save(self, path: Path | str) -> None:
        save_checkpoint(path, self.to_state())

    @classmethod
    def load(cls, path: Path | str) -> "Checkpoint":
        return cls.from_state(load_checkpoint(path))
