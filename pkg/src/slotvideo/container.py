"""Deterministic single-file array container.

A container is a ZIP archive with one ``<name>.npy`` member per array and an
optional ``meta.json`` member. Each ``.npy`` member uses the NumPy array
format: a header recording shape and dtype followed by the raw buffer in
row-major order; all numeric payloads are written little-endian. Members are
stored uncompressed, in sorted name order, with a fixed timestamp, so writing
the same content twice yields byte-identical files on any platform. The files
remain readable by ``numpy.load``.

Used for video clips, precomputed feature files, and slot banks.
"""
from __future__ import annotations

import io
import json
import zipfile
from typing import Mapping

import numpy as np

# Fixed member timestamp (the ZIP epoch); real mtimes would break determinism.
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)
META_MEMBER = "meta.json"


def _little_endian(arr: np.ndarray) -> np.ndarray:
    if arr.dtype.byteorder == ">":
        return arr.astype(arr.dtype.newbyteorder("<"))
    return arr


def save_arrays(path, arrays: Mapping[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named arrays (plus optional JSON-serializable metadata) to `path`."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            arr = _little_endian(np.ascontiguousarray(arrays[name]))
            np.lib.format.write_array(buf, arr, allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=_ZIP_DATE), buf.getvalue())
        if meta is not None:
            payload = json.dumps(meta, sort_keys=True).encode("utf-8")
            zf.writestr(zipfile.ZipInfo(META_MEMBER, date_time=_ZIP_DATE), payload)


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a container; returns (arrays by name, metadata dict)."""
    arrays: dict[str, np.ndarray] = {}
    meta: dict = {}
    with zipfile.ZipFile(path, "r") as zf:
        for info in zf.infolist():
            if info.filename == META_MEMBER:
                meta = json.loads(zf.read(info).decode("utf-8"))
            elif info.filename.endswith(".npy"):
                buf = io.BytesIO(zf.read(info))
                arrays[info.filename[: -len(".npy")]] = np.lib.format.read_array(
                    buf, allow_pickle=False
                )
    return arrays, meta
