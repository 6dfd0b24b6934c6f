"""Checkpoint persistence: a JSON manifest plus one little-endian binary blob.

The manifest lists every array (name, shape, dtype, byte offset) together
with the training step and any JSON-serialisable extras; the blob is the raw
concatenation of the arrays.  Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

FORMAT_NAME = "spflab-checkpoint-v1"
# Little-endian on-disk dtypes; anything else must be converted by the caller.
_DTYPES = {"float64": "<f8", "int64": "<i8", "uint64": "<u8"}


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_arrays(
    base: str | Path,
    arrays: dict[str, np.ndarray],
    step: int = 0,
    extra: dict | None = None,
) -> tuple[Path, Path]:
    """Write {base}.json and {base}.bin; returns both paths."""
    base = Path(base)
    manifest_path = base.with_suffix(".json")
    blob_path = base.with_suffix(".bin")
    entries = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dtype = str(arr.dtype)
        if dtype not in _DTYPES:
            raise ValueError(f"unsupported checkpoint dtype {dtype} for {name!r}")
        raw = arr.astype(_DTYPES[dtype]).tobytes()
        entries.append(
            {"name": name, "shape": list(arr.shape), "dtype": dtype, "offset": offset}
        )
        chunks.append(raw)
        offset += len(raw)
    manifest = {
        "format": FORMAT_NAME,
        "step": int(step),
        "tensors": entries,
        "extra": extra or {},
    }
    _atomic_write_bytes(blob_path, b"".join(chunks))
    _atomic_write_bytes(
        manifest_path, json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8")
    )
    return manifest_path, blob_path


def load_arrays(base: str | Path) -> tuple[dict[str, np.ndarray], int, dict]:
    """Read a checkpoint written by save_arrays: (arrays, step, extra)."""
    base = Path(base)
    manifest = json.loads(base.with_suffix(".json").read_text(encoding="utf-8"))
    if manifest.get("format") != FORMAT_NAME:
        raise ValueError(f"not a recognised checkpoint manifest: {base}")
    blob = base.with_suffix(".bin").read_bytes()
    arrays = {}
    for entry in manifest["tensors"]:
        dtype = _DTYPES[entry["dtype"]]
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        start = entry["offset"]
        arr = np.frombuffer(
            blob, dtype=dtype, count=count, offset=start
        ).astype(entry["dtype"]).reshape(entry["shape"])
        arrays[entry["name"]] = arr
    return arrays, int(manifest["step"]), manifest.get("extra", {})
