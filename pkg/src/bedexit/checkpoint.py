"""Versioned binary checkpoint container.

Layout (all integers little-endian; see docs/checkpoint-format.md):

    magic   4 bytes  b"BDXC"
    version u32      currently 1
    n_meta  u32      then n_meta entries of (u16-len key, u16-len value), utf-8
    n_tens  u32      then n_tens records:
        name  u16-len utf-8
        rank  u8
        dims  rank x u32
        data  prod(dims) x float32

Metadata carries the model configuration; tensor records are the model's
named parameters in a fixed sorted order. Reading back into a model requires
every name and shape to match exactly.
"""

from __future__ import annotations

import io as _io
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointFormatError, CheckpointMismatchError
from .io import atomic_write_bytes
from .model import BedExitModel, ModelConfig

MAGIC = b"BDXC"
VERSION = 1


def _pack_str(buf: _io.BytesIO, s: str) -> None:
    data = s.encode("utf-8")
    if len(data) > 0xFFFF:
        raise CheckpointFormatError("string too long for u16 length prefix")
    buf.write(struct.pack("<H", len(data)))
    buf.write(data)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointFormatError("truncated checkpoint")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u16()).decode("utf-8")


def config_to_meta(config: ModelConfig) -> dict[str, str]:
    return {
        "attn_heads": str(config.attn_heads),
        "dropout": repr(config.dropout),
        "embed_dim": str(config.embed_dim),
        "fusion_heads": str(config.fusion_heads),
        "fusion_mode": config.fusion_mode,
        "input_size": str(config.input_size),
        "modality": config.modality,
        "num_blocks_per_stream": str(config.num_blocks_per_stream),
        "patch_size": str(config.patch_size),
    }


def meta_to_config(meta: dict[str, str]) -> ModelConfig:
    try:
        return ModelConfig(
            input_size=int(meta["input_size"]),
            patch_size=int(meta["patch_size"]),
            embed_dim=int(meta["embed_dim"]),
            num_blocks_per_stream=int(meta["num_blocks_per_stream"]),
            attn_heads=int(meta["attn_heads"]),
            fusion_mode=meta["fusion_mode"],
            fusion_heads=int(meta["fusion_heads"]),
            dropout=float(meta["dropout"]),
            modality=meta["modality"],
        ).validate()
    except KeyError as exc:
        raise CheckpointFormatError(f"checkpoint metadata missing {exc}") from exc


def serialize(model: BedExitModel) -> bytes:
    buf = _io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))

    meta = config_to_meta(model.config)
    buf.write(struct.pack("<I", len(meta)))
    for key in sorted(meta):
        _pack_str(buf, key)
        _pack_str(buf, meta[key])

    named = sorted(model.state_dict().items())
    buf.write(struct.pack("<I", len(named)))
    for name, tensor in named:
        arr = tensor.detach().cpu().to(torch.float32).numpy()
        if arr.ndim > 0xFF:
            raise CheckpointFormatError(f"tensor {name} rank too large")
        _pack_str(buf, name)
        buf.write(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<I", dim))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def deserialize(data: bytes) -> tuple[ModelConfig, dict[str, torch.Tensor]]:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointFormatError("not a checkpoint file (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")

    meta = {}
    for _ in range(r.u32()):
        key = r.string()
        meta[key] = r.string()
    config = meta_to_config(meta)

    tensors: dict[str, torch.Tensor] = {}
    for _ in range(r.u32()):
        name = r.string()
        rank = r.u8()
        shape = tuple(r.u32() for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        raw = r.take(4 * count)
        arr = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        tensors[name] = torch.from_numpy(arr)
    if r.pos != len(data):
        raise CheckpointFormatError("trailing bytes after last tensor")
    return config, tensors


def save_checkpoint(path: str | Path, model: BedExitModel) -> None:
    atomic_write_bytes(path, serialize(model))


def load_checkpoint(path: str | Path) -> BedExitModel:
    """Rebuild the model from a checkpoint file."""
    path = Path(path)
    if not path.exists():
        raise CheckpointFormatError(f"checkpoint not found: {path}")
    config, tensors = deserialize(path.read_bytes())
    model = BedExitModel(config)
    return load_state_into(model, tensors)


def load_state_into(model: BedExitModel, tensors: dict[str, torch.Tensor]) -> BedExitModel:
    """Install checkpoint tensors, requiring an exact name/shape match."""
    state = model.state_dict()
    for name in state:
        if name not in tensors:
            raise CheckpointMismatchError(f"checkpoint missing tensor {name}")
    for name, tensor in tensors.items():
        if name not in state:
            raise CheckpointMismatchError(f"unexpected tensor {name} in checkpoint")
        if tuple(state[name].shape) != tuple(tensor.shape):
            raise CheckpointMismatchError(
                f"shape mismatch for {name}: model {tuple(state[name].shape)}, "
                f"checkpoint {tuple(tensor.shape)}"
            )
    model.load_state_dict(tensors)
    return model
