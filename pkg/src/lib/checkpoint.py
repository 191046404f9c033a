"""
TTK1 checkpoints: magic, u32 version, u32 entry count, then per entry a u16
name length, the UTF-8 name, a u8 rank, u32 extents and float32 values, all
little-endian.
"""

import glob
import os
import struct
import time
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from src.ndtensor.errors import CheckpointError
from src.ndtensor.module import Module

MAGIC = b"TTK1"
VERSION = 1
SUFFIX = ".ttk"


def save_state(state: Mapping[str, np.ndarray], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(state))]
    for name, value in state.items():
        encoded = name.encode("utf-8")
        value = np.asarray(value)
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack(f"<B{value.ndim}I", value.ndim, *value.shape))
        chunks.append(value.astype("<f4").tobytes())
    path.write_bytes(b"".join(chunks))
    return path


def load_state(path: str | Path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a TTK1 checkpoint")
    try:
        version, count = struct.unpack_from("<II", data, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        offset, state = 12, {}
        for _ in range(count):
            (length,) = struct.unpack_from("<H", data, offset)
            offset += 2
            name = data[offset : offset + length].decode("utf-8")
            offset += length
            (rank,) = struct.unpack_from("<B", data, offset)
            shape = struct.unpack_from(f"<{rank}I", data, offset + 1)
            offset += 1 + 4 * rank
            size = int(np.prod(shape, dtype=np.int64))
            values = np.frombuffer(data, dtype="<f4", count=size, offset=offset)
            offset += 4 * size
            if name in state:
                raise CheckpointError("Duplicate parameter", name)
            state[name] = values.reshape(shape).astype(np.float32)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"{path} is truncated or corrupt: {exc}") from exc
    if offset != len(data):
        raise CheckpointError(f"{path} has {len(data) - offset} trailing bytes")
    return state


def save_checkpoint(model: Module, path: str | Path) -> Path:
    return save_state(model.state_dict(), path)


def load_checkpoint(model: Module, path: str | Path) -> None:
    """Load a checkpoint into `model`; unknown, missing or misshaped names are rejected."""
    model.load_state_dict(load_state(path))


def checkpoint_path(name: str, root: str | Path = "checkpoints") -> Path:
    return Path(root) / name / f"{name}_{time.strftime('%Y%m%d-%H%M%S')}{SUFFIX}"


def latest_checkpoint(name: Optional[str] = None, root: str | Path = "checkpoints") -> Path:
    pattern = f"{root}/{name}/{name}*{SUFFIX}" if name else f"{root}/*/*{SUFFIX}"
    try:
        return Path(max(glob.glob(pattern), key=os.path.getctime))
    except ValueError:
        raise CheckpointError(f"no checkpoint matches {pattern}") from None
