"""Binary checkpoint format for the network parameters.

Layout: magic "MESA1", then for each parameter in canonical (sorted) name
order: u16 name length, UTF-8 name, u8 rank, u32 per-dim sizes, then the
little-endian float64 payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .network import NetworkParameters, parameter_shapes

MAGIC = b"MESA1"


class CheckpointError(ValueError):
    """Malformed or structurally wrong checkpoint file."""


def save_checkpoint(params: NetworkParameters, path: str | Path) -> None:
    chunks = [MAGIC]
    for name in sorted(params.params):
        arr = params.params[name]
        name_b = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> NetworkParameters:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: unknown magic {data[:len(MAGIC)]!r}")
    off = len(MAGIC)
    params: dict[str, np.ndarray] = {}
    try:
        while off < len(data):
            (name_len,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off : off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<B", data, off)
            off += 1
            shape = struct.unpack_from(f"<{rank}I", data, off)
            off += 4 * rank
            count = int(np.prod(shape)) if rank else 1
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape)
            off += 8 * count
            params[name] = arr.astype(float)
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({exc})") from exc

    if "policy_head.b" not in params:
        raise CheckpointError(f"{path}: missing parameter policy_head.b")
    n_actions = params["policy_head.b"].shape[0]
    expected = parameter_shapes(n_actions)
    for name in sorted(set(expected) | set(params)):
        if name not in params:
            raise CheckpointError(f"{path}: missing parameter {name}")
        if name not in expected:
            raise CheckpointError(f"{path}: unexpected parameter {name}")
        if params[name].shape != expected[name]:
            raise CheckpointError(
                f"{path}: parameter {name} has shape {params[name].shape}, expected {expected[name]}"
            )
    return NetworkParameters(params, n_actions)
