"""Byte-stable binary container for trained network weights.

Archive writers like zip embed timestamps, which breaks run-to-run byte
identity, so weights use a purpose-built flat format:

    magic "SPWT0001" | uint64-LE header length | header JSON | raw buffers

The header is canonical JSON (sorted keys) holding metadata plus a tensor
index; buffers are little-endian, concatenated in index order. Writing
the same tensors and metadata twice yields identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SPWT0001"
FORMAT_VERSION = 1


class WeightsFormatError(ValueError):
    pass


def save_weights(path, tensors: dict, meta: dict) -> Path:
    """tensors: {name: array-like}; meta: JSON-serializable metadata.
    Tensors are stored float-preserving as little-endian in name order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    index = []
    buffers = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(_to_numpy(tensors[name]))
        raw = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        index.append(
            {
                "name": name,
                "dtype": arr.dtype.name,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        buffers.append(raw)
        offset += len(raw)
    header = {"format": FORMAT_VERSION, "meta": meta, "tensors": index}
    header_raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header_raw)))
        f.write(header_raw)
        for raw in buffers:
            f.write(raw)
    return path


def load_weights(path):
    """Returns (meta, {name: np.ndarray})."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise WeightsFormatError(f"{path}: not a weights file (bad magic)")
    (header_len,) = struct.unpack_from("<Q", raw, len(MAGIC))
    header_start = len(MAGIC) + 8
    try:
        header = json.loads(raw[header_start:header_start + header_len])
    except json.JSONDecodeError as e:
        raise WeightsFormatError(f"{path}: corrupt header: {e}") from e
    if header.get("format") != FORMAT_VERSION:
        raise WeightsFormatError(f"{path}: unsupported format {header.get('format')}")
    payload = header_start + header_len
    tensors = {}
    for entry in header["tensors"]:
        start = payload + entry["offset"]
        end = start + entry["nbytes"]
        arr = np.frombuffer(raw[start:end], dtype=np.dtype(entry["dtype"]).newbyteorder("<"))
        tensors[entry["name"]] = arr.reshape(entry["shape"]).astype(entry["dtype"])
        if not np.all(np.isfinite(tensors[entry["name"]])) and np.issubdtype(
            tensors[entry["name"]].dtype, np.floating
        ):
            raise WeightsFormatError(f"{path}: tensor {entry['name']} has non-finite values")
    return header["meta"], tensors


def _to_numpy(t):
    if isinstance(t, np.ndarray):
        return t
    detach = getattr(t, "detach", None)
    if detach is not None:  # torch tensor without importing torch here
        return detach().cpu().numpy()
    return np.asarray(t)
