"""Binary checkpoint container shared by the denoiser and the scorers.

Layout, all integers little-endian:

    bytes 0..3    magic b"AMTL"
    bytes 4..7    u32 format version (currently 1)
    bytes 8..11   u32 header length in bytes
    header        UTF-8 JSON: {"kind": str, "config": {...},
                               "tensors": [{"name": str, "shape": [...]}]}
    payload       raw little-endian float32 values, tensor after tensor,
                  in the exact order declared by the header

Round trips are bit-exact: float32 in, identical float32 out.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

__all__ = ["MAGIC", "FORMAT_VERSION", "save_checkpoint", "load_checkpoint", "CheckpointError"]

MAGIC = b"AMTL"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Raised for malformed or incompatible checkpoint files."""


def save_checkpoint(path, kind: str, config: dict, tensors: dict) -> None:
    """Write named float32 arrays plus a JSON-serializable config to ``path``.

    ``tensors`` is an ordered mapping name -> array; insertion order is the
    declared payload order.
    """
    entries = []
    blobs = []
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float32)
        entries.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.astype("<f4", copy=False).tobytes())
    header = json.dumps(
        {"kind": kind, "config": config, "tensors": entries},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path):
    """Read a checkpoint; returns (kind, config, dict name -> float32 array)."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version, header_len = struct.unpack("<II", raw[4:12])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    try:
        header = json.loads(raw[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header ({e})") from None
    offset = 12 + header_len
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated payload at tensor {entry['name']!r}")
        tensors[entry["name"]] = np.frombuffer(
            raw[offset:end], dtype="<f4").reshape(shape).copy()
        offset = end
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes after payload")
    return header["kind"], header["config"], tensors
