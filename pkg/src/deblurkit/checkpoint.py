"""Deterministic checkpoint container.

Layout: magic | u32 format version | u64 header length | header JSON |
payload | sha256 digest of everything before it. Entries are sorted by
name and stored as little-endian C-contiguous buffers, so saving the same
state twice produces identical bytes.

A sidecar manifest (`<file>.manifest.json`) records the backbone name,
config values, step counter and format version.
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError

MAGIC = b"DBLK"
FORMAT_VERSION = 1


def _as_array(value) -> np.ndarray:
    if isinstance(value, torch.Tensor):
        value = value.detach().cpu().numpy()
    arr = np.ascontiguousarray(value)
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    return arr


def save_tensors(path, named: dict) -> None:
    """Write a name->array/tensor mapping as one deterministic container."""
    entries = []
    payload = bytearray()
    for name in sorted(named):
        arr = _as_array(named[name])
        entries.append(
            {
                "name": name,
                "dtype": arr.dtype.str,
                "shape": list(arr.shape),
                "offset": len(payload),
                "nbytes": arr.nbytes,
            }
        )
        payload += arr.tobytes()
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "entries": entries},
        sort_keys=True,
        separators=(",", ":"),
    ).encode()
    body = MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(header)) + header + bytes(payload)
    digest = hashlib.sha256(body).digest()
    Path(path).write_bytes(body + digest)


def load_tensors(path) -> dict:
    """Read a container back into a name->np.ndarray mapping."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 12 + 32 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint container")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum failure (file corrupted)")
    version, header_len = struct.unpack_from("<IQ", body, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {version} unsupported (expected {FORMAT_VERSION})"
        )
    header_start = len(MAGIC) + 12
    header = json.loads(body[header_start : header_start + header_len])
    payload = body[header_start + header_len :]
    out = {}
    for entry in header["entries"]:
        start = entry["offset"]
        buf = payload[start : start + entry["nbytes"]]
        out[entry["name"]] = np.frombuffer(buf, dtype=np.dtype(entry["dtype"])).reshape(
            entry["shape"]
        ).copy()
    return out


def manifest_path(path) -> Path:
    return Path(str(path) + ".manifest.json")


def save_manifest(path, manifest: dict) -> None:
    text = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    manifest_path(path).write_text(text)


def load_manifest(path) -> dict:
    p = manifest_path(path)
    if not p.is_file():
        raise CheckpointError(f"missing sidecar manifest {p}")
    manifest = json.loads(p.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{p}: manifest format version {manifest.get('format_version')} unsupported"
        )
    return manifest
