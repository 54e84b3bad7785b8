"""Deterministic on-disk bundles: npz-compatible zips with fixed timestamps.

Re-running a seeded experiment must produce byte-identical artifact files,
so entries are written with a constant zip date and sorted names instead of
going through numpy's savez (which stamps wall-clock times).
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from pathlib import Path

import numpy as np
from numpy.lib import format as npformat

_FIXED_DATE = (1980, 1, 1, 0, 0, 0)
_META_KEY = "__meta__"


def save_bundle(path, meta: dict, arrays: dict) -> None:
    """Write arrays plus a JSON metadata entry to an npz-compatible file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = {_META_KEY: np.array(json.dumps(meta, sort_keys=True))}
    for name, value in arrays.items():
        if name == _META_KEY:
            raise ValueError(f"array name {name!r} is reserved")
        entries[name] = np.asarray(value)
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        for name in sorted(entries):
            buf = io.BytesIO()
            npformat.write_array(buf, entries[name], allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=_FIXED_DATE)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, buf.getvalue())


def load_bundle(path) -> tuple[dict, dict]:
    """Read back (meta, arrays) written by save_bundle."""
    with np.load(path, allow_pickle=False) as data:
        if _META_KEY not in data.files:
            raise ValueError(f"{path} has no metadata entry")
        meta = json.loads(data[_META_KEY].item())
        arrays = {k: data[k] for k in data.files if k != _META_KEY}
    return meta, arrays


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())
