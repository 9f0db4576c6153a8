"""Versioned binary checkpoint container.

Layout: 4-byte magic, little-endian u32 version, u32 JSON header length,
UTF-8 JSON header (kind, config echo, step counter, extras), then the
parameter block (torch state dict).
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import torch

__all__ = ["Checkpoint", "save_checkpoint", "load_checkpoint", "CheckpointError"]

MAGIC = b"S2PK"
VERSION = 1
SUPPORTED_VERSIONS = {1}


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    kind: str
    config: dict
    state_dict: dict
    step: int = 0
    extra: dict = field(default_factory=dict)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    header = json.dumps(
        {"kind": ckpt.kind, "config": ckpt.config, "step": ckpt.step, "extra": ckpt.extra},
        sort_keys=True,
    ).encode("utf-8")
    buf = io.BytesIO()
    torch.save(ckpt.state_dict, buf)
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(header)))
        f.write(header)
        f.write(buf.getvalue())


def load_checkpoint(path) -> Checkpoint:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    with open(p, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"bad magic in {p}")
        version, hlen = struct.unpack("<II", f.read(8))
        if version not in SUPPORTED_VERSIONS:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        header = json.loads(f.read(hlen).decode("utf-8"))
        state_dict = torch.load(f, weights_only=True)
    return Checkpoint(
        kind=header["kind"],
        config=header["config"],
        state_dict=state_dict,
        step=header.get("step", 0),
        extra=header.get("extra", {}),
    )
