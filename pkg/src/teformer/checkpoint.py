"""Byte-stable checkpoint format: JSON header plus raw little-endian tensor buffers.

A checkpoint is a flat map of named tensors with shapes (plus a JSON metadata
block).  Buffers are laid out in sorted name order and the header is
canonicalized, so save -> load -> save reproduces the file byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

MAGIC = b"TEFCKPT1\n"

_DTYPES = {
    "float32": np.float32,
    "float64": np.float64,
    "int64": np.int64,
    "int32": np.int32,
    "uint8": np.uint8,
}


def save_checkpoint(path: str | Path, state: dict[str, torch.Tensor], meta: dict | None = None) -> Path:
    path = Path(path)
    entries = {}
    buffers = []
    offset = 0
    for name in sorted(state):
        arr = state[name].detach().cpu().numpy()
        dtype = str(arr.dtype)
        if dtype not in _DTYPES:
            raise ValueError(f"unsupported checkpoint dtype {dtype} for '{name}'")
        raw = np.ascontiguousarray(arr).astype(_DTYPES[dtype], copy=False)
        raw = raw.astype(raw.dtype.newbyteorder("<"), copy=False)
        blob = raw.tobytes()
        entries[name] = {
            "dtype": dtype,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(blob),
        }
        buffers.append(blob)
        offset += len(blob)
    header = json.dumps({"tensors": entries, "meta": meta or {}}, sort_keys=True)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header.encode())
        for blob in buffers:
            fh.write(blob)
    return path


def load_checkpoint(path: str | Path) -> tuple[dict[str, torch.Tensor], dict]:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path} is not a recognized checkpoint file")
        header_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(header_len).decode())
        payload = fh.read()
    state = {}
    for name, entry in header["tensors"].items():
        raw = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(_DTYPES[entry["dtype"]]).newbyteorder("<"))
        state[name] = torch.from_numpy(arr.reshape(entry["shape"]).copy())
    return state, header["meta"]
