"""Binary tensor containers: BTSR v1 (rasters/grids) and FMX v1 (features).

BTSR v1, little-endian:
    magic "BTSR" | u32 version=1 | u32 rank | rank x u64 dims
    | u8 dtype (0=f64, 1=u16) | row-major payload

FMX v1, little-endian:
    magic "FMX1" | u32 version=1 | u64 n | u64 d | u8 dtype=0 (f64)
    | u64 xxhash64(payload, seed=0) | row-major payload

Both formats keep JSON sidecars next to the binary file (band labels for
rasters, the location manifest for feature matrices).
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np
import xxhash

from .errors import ChecksumMismatch, FormatError, NonFiniteValue

_BTSR_MAGIC = b"BTSR"
_FMX_MAGIC = b"FMX1"

_DTYPE_CODES = {0: np.dtype("<f8"), 1: np.dtype("<u2")}
_DTYPE_TO_CODE = {np.dtype("<f8"): 0, np.dtype("<u2"): 1}


def _read_exact(buf: bytes, offset: int, n: int, what: str) -> bytes:
    if offset + n > len(buf):
        raise FormatError(f"truncated file while reading {what}", offset=offset)
    return buf[offset:offset + n]


def write_btsr(path: str | os.PathLike, array: np.ndarray) -> None:
    """Write an array as a BTSR v1 container (dtype must be f64 or u16)."""
    arr = np.asarray(array)
    if arr.dtype == np.uint16:
        arr = arr.astype("<u2", copy=False)
    else:
        arr = arr.astype("<f8", copy=False)
    code = _DTYPE_TO_CODE[arr.dtype]
    with open(path, "wb") as fh:
        fh.write(_BTSR_MAGIC)
        fh.write(struct.pack("<I", 1))
        fh.write(struct.pack("<I", arr.ndim))
        for dim in arr.shape:
            fh.write(struct.pack("<Q", dim))
        fh.write(struct.pack("<B", code))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_btsr(path: str | os.PathLike) -> np.ndarray:
    """Read a BTSR v1 container back into an array."""
    buf = Path(path).read_bytes()
    off = 0
    magic = _read_exact(buf, off, 4, "magic")
    if magic != _BTSR_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {_BTSR_MAGIC!r}", offset=0)
    off += 4
    (version,) = struct.unpack("<I", _read_exact(buf, off, 4, "version"))
    if version != 1:
        raise FormatError(f"unsupported BTSR version {version}", offset=off)
    off += 4
    (rank,) = struct.unpack("<I", _read_exact(buf, off, 4, "rank"))
    off += 4
    if rank > 32:
        raise FormatError(f"implausible rank {rank}", offset=off - 4)
    dims = []
    for _ in range(rank):
        (dim,) = struct.unpack("<Q", _read_exact(buf, off, 8, "dims"))
        dims.append(dim)
        off += 8
    (code,) = struct.unpack("<B", _read_exact(buf, off, 1, "dtype"))
    if code not in _DTYPE_CODES:
        raise FormatError(f"unknown dtype code {code}", offset=off)
    off += 1
    dtype = _DTYPE_CODES[code]
    count = int(np.prod(dims, dtype=np.int64)) if dims else 1
    need = count * dtype.itemsize
    payload = _read_exact(buf, off, need, "payload")
    if len(buf) != off + need:
        raise FormatError("trailing bytes after payload", offset=off + need)
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


def bands_sidecar_path(path: str | os.PathLike) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".bands.json")


def manifest_sidecar_path(path: str | os.PathLike) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".manifest.json")


def payload_hash(payload: bytes) -> int:
    return xxhash.xxh64(payload, seed=0).intdigest()


def write_fmx(path: str | os.PathLike, values: np.ndarray,
              location_ids: list[str], view_name: str,
              extra_sidecar: dict | None = None) -> None:
    """Write a feature matrix in FMX v1 with its manifest sidecar."""
    arr = np.ascontiguousarray(np.asarray(values, dtype="<f8"))
    if arr.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    n, d = arr.shape
    if len(location_ids) != n:
        raise ValueError("manifest length does not match row count")
    payload = arr.tobytes()
    with open(path, "wb") as fh:
        fh.write(_FMX_MAGIC)
        fh.write(struct.pack("<I", 1))
        fh.write(struct.pack("<Q", n))
        fh.write(struct.pack("<Q", d))
        fh.write(struct.pack("<B", 0))
        fh.write(struct.pack("<Q", payload_hash(payload)))
        fh.write(payload)
    sidecar = {"location_ids": list(location_ids), "view_name": view_name}
    if extra_sidecar:
        sidecar.update(extra_sidecar)
    manifest_sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def read_fmx(path: str | os.PathLike) -> tuple[np.ndarray, list[str], str, dict]:
    """Read an FMX v1 file; returns (values, location_ids, view_name, sidecar).

    Validates magic, version, shape, checksum, and finiteness.
    """
    buf = Path(path).read_bytes()
    off = 0
    magic = _read_exact(buf, off, 4, "magic")
    if magic != _FMX_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {_FMX_MAGIC!r}", offset=0)
    off += 4
    (version,) = struct.unpack("<I", _read_exact(buf, off, 4, "version"))
    if version != 1:
        raise FormatError(f"unsupported FMX version {version}", offset=off)
    off += 4
    (n,) = struct.unpack("<Q", _read_exact(buf, off, 8, "n"))
    off += 8
    (d,) = struct.unpack("<Q", _read_exact(buf, off, 8, "d"))
    off += 8
    (code,) = struct.unpack("<B", _read_exact(buf, off, 1, "dtype"))
    if code != 0:
        raise FormatError(f"unsupported dtype code {code}", offset=off)
    off += 1
    (stored_hash,) = struct.unpack("<Q", _read_exact(buf, off, 8, "checksum"))
    off += 8
    need = n * d * 8
    payload = _read_exact(buf, off, need, "payload")
    if len(buf) != off + need:
        raise FormatError("payload size does not match header n x d", offset=off + need)
    if payload_hash(payload) != stored_hash:
        raise ChecksumMismatch(f"payload hash mismatch in {path}")
    values = np.frombuffer(payload, dtype="<f8").reshape(n, d).copy()
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        raise NonFiniteValue(int(bad[0, 0]), int(bad[0, 1]))

    sidecar_path = manifest_sidecar_path(path)
    sidecar: dict = {}
    location_ids: list[str] = [str(i) for i in range(n)]
    view_name = ""
    if sidecar_path.exists():
        sidecar = json.loads(sidecar_path.read_text())
        location_ids = [str(x) for x in sidecar.get("location_ids", location_ids)]
        view_name = str(sidecar.get("view_name", ""))
        if len(location_ids) != n:
            raise FormatError(
                f"manifest lists {len(location_ids)} locations for {n} rows", offset=None)
    return values, location_ids, view_name, sidecar
