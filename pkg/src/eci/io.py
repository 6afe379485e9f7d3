"""FGRID binary format and dataset directory layout.

FGRID layout (all little-endian): magic ``FGRD``, u32 version=1, u8 ndims,
then per axis ``f64 lower, f64 upper, u64 resolution``, then the f64 values
row-major. Datasets are directories of FGRID files plus a ``manifest.json``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .grid import Domain, GridFunction

FGRID_MAGIC = b"FGRD"
FGRID_VERSION = 1


class CorruptFileError(ValueError):
    """File is truncated or fails a format check."""


def write_fgrid(f: GridFunction, path: str | Path) -> None:
    path = Path(path)
    parts = [FGRID_MAGIC, struct.pack("<IB", FGRID_VERSION, f.domain.ndim)]
    for lo, hi, res in f.domain.axes:
        parts.append(struct.pack("<ddQ", lo, hi, res))
    parts.append(f.values.astype("<f8").tobytes())
    path.write_bytes(b"".join(parts))


def read_fgrid(path: str | Path) -> GridFunction:
    data = Path(path).read_bytes()
    if len(data) < 9 or data[:4] != FGRID_MAGIC:
        raise CorruptFileError(f"{path}: not an FGRID file")
    version, ndims = struct.unpack_from("<IB", data, 4)
    if version != FGRID_VERSION:
        raise CorruptFileError(f"{path}: unsupported FGRID version {version}")
    off = 9
    axes = []
    for _ in range(ndims):
        if off + 24 > len(data):
            raise CorruptFileError(f"{path}: truncated axis table")
        lo, hi, res = struct.unpack_from("<ddQ", data, off)
        axes.append((lo, hi, int(res)))
        off += 24
    domain = Domain(tuple(axes))
    expected = off + 8 * domain.size
    if len(data) != expected:
        raise CorruptFileError(f"{path}: expected {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<f8", count=domain.size, offset=off)
    return GridFunction(domain, values.copy())


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def write_manifest(path: str | Path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def sample_filename(i: int) -> str:
    return f"sample_{i:05d}.fgrid"


def write_sample_dir(out_dir: str | Path, fields: list[GridFunction], manifest: dict) -> dict:
    """Write fields as FGRID files plus a manifest; returns the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for i, f in enumerate(fields):
        name = sample_filename(i)
        write_fgrid(f, out_dir / name)
        names.append(name)
    manifest = dict(manifest)
    manifest["files"] = names
    manifest["hashes"] = {n: sha256_file(out_dir / n) for n in names}
    write_manifest(out_dir / "manifest.json", manifest)
    return manifest


def read_sample_dir(path: str | Path) -> tuple[list[GridFunction], dict]:
    """Read all FGRID files from a dataset directory (manifest order)."""
    path = Path(path)
    manifest_path = path / "manifest.json"
    if manifest_path.exists():
        manifest = read_manifest(manifest_path)
        names = manifest["files"]
    else:
        manifest = {}
        names = sorted(p.name for p in path.glob("*.fgrid"))
    if not names:
        raise CorruptFileError(f"{path}: no FGRID samples found")
    return [read_fgrid(path / n) for n in names], manifest
