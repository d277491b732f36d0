"""Binary tensor format: a JSON manifest plus one raw blob per array.

Blobs are little-endian float64, row-major, no header; shapes live in the
manifest alongside sha256 checksums. Trivially readable from any language.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1

__all__ = [
    "FORMAT_VERSION",
    "write_blob",
    "read_blob",
    "save_arrays",
    "load_arrays",
    "sha256_file",
]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def write_blob(path, arr: np.ndarray) -> str:
    data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_blob(path, shape) -> np.ndarray:
    raw = Path(path).read_bytes()
    arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return arr.reshape(shape)


def save_arrays(out_dir, arrays: dict[str, np.ndarray], meta: dict | None = None) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"format_version": FORMAT_VERSION, "arrays": {}, "meta": meta or {}}
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        blob = f"{name}.f64le"
        digest = write_blob(out_dir / blob, arr)
        manifest["arrays"][name] = {
            "file": blob,
            "shape": list(arr.shape),
            "dtype": "f64le",
            "sha256": digest,
        }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


def load_arrays(in_dir) -> tuple[dict[str, np.ndarray], dict]:
    in_dir = Path(in_dir)
    manifest = json.loads((in_dir / "manifest.json").read_text(encoding="utf-8"))
    arrays = {}
    for name, info in manifest["arrays"].items():
        path = in_dir / info["file"]
        if sha256_file(path) != info["sha256"]:
            raise ValueError(f"checksum mismatch for array {name!r}")
        arrays[name] = read_blob(path, info["shape"])
    return arrays, manifest.get("meta", {})
