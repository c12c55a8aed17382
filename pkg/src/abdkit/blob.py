"""Checkpoint blob format: a 4-byte LE length-prefixed JSON manifest
(tensor names, shapes, dtype, plus arbitrary extra fields) followed by
concatenated little-endian float32 payloads in manifest order."""

from __future__ import annotations

import json
import struct

import numpy as np


class BlobFormatError(ValueError):
    pass


def save_blob(path, tensors: dict, extra: dict = None):
    """Write named arrays (float32 payload) plus extra manifest metadata."""
    entries = [{"name": name, "shape": list(np.asarray(a).shape), "dtype": "float32"}
               for name, a in tensors.items()]
    manifest = dict(extra or {})
    manifest["tensors"] = entries
    blob = json.dumps(manifest).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name, a in tensors.items():
            f.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def load_blob(path):
    """Read (tensors: dict[str, ndarray], manifest: dict) from a blob file."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4:
        raise BlobFormatError(f"{path}: truncated blob")
    (mlen,) = struct.unpack_from("<I", data, 0)
    if len(data) < 4 + mlen:
        raise BlobFormatError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(data[4:4 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise BlobFormatError(f"{path}: bad manifest: {e}") from e
    offset = 4 + mlen
    tensors = {}
    for entry in manifest.get("tensors", []):
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        end = offset + 4 * n
        if end > len(data):
            raise BlobFormatError(f"{path}: truncated payload for {entry['name']}")
        tensors[entry["name"]] = np.frombuffer(
            data[offset:end], dtype="<f4").reshape(shape).astype(np.float64)
        offset = end
    return tensors, manifest
