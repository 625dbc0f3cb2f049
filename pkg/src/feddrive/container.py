"""Deterministic binary container for checkpoints.

Byte layout (all integers little-endian):

    offset 0   8 bytes   magic ``b"FDCKPT1\\n"``
    offset 8   4 bytes   uint32 header length H
    offset 12  H bytes   UTF-8 JSON header
    offset 12+H          raw array payload

Header JSON (keys sorted, compact separators, so identical content produces
identical bytes):

    {
      "format_version": 1,
      "arrays": [{"name": str, "dtype": str, "shape": [int, ...],
                  "offset": int, "nbytes": int}, ...],
      "meta": {... JSON-serializable metadata ...}
    }

Array payloads are C-order little-endian, concatenated in header order.
Unlike zip-based formats there are no timestamps, so writing the same
content twice yields byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FDCKPT1\n"
FORMAT_VERSION = 1


class ContainerError(ValueError):
    """Corrupt, truncated, or unsupported checkpoint file."""


def save_container(path: str | Path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    entries = []
    payload = bytearray()
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        dtype = arr.dtype.newbyteorder("<")
        raw = arr.astype(dtype, copy=False).tobytes()
        entries.append(
            {
                "name": name,
                "dtype": dtype.str,
                "shape": list(arr.shape),
                "offset": len(payload),
                "nbytes": len(raw),
            }
        )
        payload.extend(raw)
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "arrays": entries, "meta": meta},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(bytes(payload))


def load_container(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 4 or blob[: len(MAGIC)] != MAGIC:
        raise ContainerError(f"{path}: not a checkpoint container (bad magic)")
    (header_len,) = struct.unpack_from("<I", blob, len(MAGIC))
    header_start = len(MAGIC) + 4
    header_end = header_start + header_len
    if len(blob) < header_end:
        raise ContainerError(f"{path}: truncated header")
    try:
        header = json.loads(blob[header_start:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: corrupt header: {exc}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise ContainerError(
            f"{path}: unsupported format version {header.get('format_version')!r}"
        )
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        start = header_end + entry["offset"]
        end = start + entry["nbytes"]
        if len(blob) < end:
            raise ContainerError(f"{path}: truncated payload for array {entry['name']!r}")
        arr = np.frombuffer(blob[start:end], dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return arrays, header["meta"]
