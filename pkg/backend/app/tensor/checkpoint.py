"""
Binary checkpoint format for named parameter sets.

Layout (little-endian):
    b"DTRP1\\n"
    u32 parameter count
    per parameter: u16 name length, UTF-8 name, u8 rank, u32 per axis, f32 data (row-major)
"""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from app.core.exceptions import CheckpointError
from app.core.logging import get_logger
from app.tensor.tensor import Tensor

logger = get_logger(__name__)

CHECKPOINT_MAGIC = b"DTRP1\n"

PathLike = Union[str, Path]


def encode_parameters(params: Mapping[str, Union[Tensor, np.ndarray]]) -> bytes:
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", len(params))]
    for name, value in params.items():
        array = value.data if isinstance(value, Tensor) else np.asarray(value)
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise CheckpointError(f"parameter name too long: {name[:40]}...")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    return b"".join(chunks)


def decode_parameters(payload: bytes) -> dict[str, np.ndarray]:
    if not payload.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError("not a DTRP1 checkpoint (bad magic)")
    offset = len(CHECKPOINT_MAGIC)
    try:
        (count,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", payload, offset)
            offset += 2
            name = payload[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", payload, offset)
            offset += 1
            shape = struct.unpack_from(f"<{rank}I", payload, offset)
            offset += 4 * rank
            size = int(np.prod(shape, dtype=np.int64))
            if offset + 4 * size > len(payload):
                raise CheckpointError(f"checkpoint truncated inside parameter {name!r}")
            arrays[name] = np.frombuffer(payload, dtype="<f4", count=size, offset=offset).reshape(shape).copy()
            offset += 4 * size
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    if offset != len(payload):
        raise CheckpointError(f"checkpoint has {len(payload) - offset} trailing bytes")
    return arrays


def save_checkpoint(path: PathLike, params: Mapping[str, Union[Tensor, np.ndarray]]) -> Path:
    """Write ``params`` atomically to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_parameters(params))
    os.replace(tmp, path)
    logger.debug("Saved %d parameters to %s", len(params), path)
    return path


def load_checkpoint(path: PathLike) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    return decode_parameters(path.read_bytes())


def restore_parameters(params: Mapping[str, Tensor], arrays: Mapping[str, np.ndarray]) -> None:
    """Copy checkpoint arrays into live parameters; names and shapes must match exactly."""
    missing = sorted(set(params) - set(arrays))
    extra = sorted(set(arrays) - set(params))
    if missing or extra:
        raise CheckpointError(f"checkpoint does not match model: missing {missing}, unexpected {extra}")
    for name, param in params.items():
        if arrays[name].shape != param.shape:
            raise CheckpointError(
                f"parameter {name!r} has shape {arrays[name].shape} in checkpoint, model expects {param.shape}"
            )
        param.assign(arrays[name])
