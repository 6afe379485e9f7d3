"""FGRID binary format and dataset directory round trips."""

import struct

import numpy as np
import pytest

from eci.grid import Domain, GridFunction
from eci.io import (
    CorruptFileError,
    read_fgrid,
    read_sample_dir,
    sample_filename,
    sha256_file,
    write_fgrid,
    write_sample_dir,
)


@pytest.fixture
def field():
    d = Domain(((0.0, 1.0, 4), (0.0, 2.0, 3)))
    return GridFunction(d, np.arange(12, dtype=float) / 7.0)


def test_round_trip_bit_exact(tmp_path, field):
    p = tmp_path / "f.fgrid"
    write_fgrid(field, p)
    g = read_fgrid(p)
    assert g.domain == field.domain
    assert np.array_equal(g.values, field.values)


def test_header_layout(tmp_path, field):
    p = tmp_path / "f.fgrid"
    write_fgrid(field, p)
    data = p.read_bytes()
    assert data[:4] == b"FGRD"
    version, ndims = struct.unpack_from("<IB", data, 4)
    assert version == 1
    assert ndims == 2
    lo, hi, res = struct.unpack_from("<ddQ", data, 9)
    assert (lo, hi, res) == (0.0, 1.0, 4)
    assert len(data) == 9 + 2 * 24 + 8 * 12


def test_wrong_magic(tmp_path):
    p = tmp_path / "bad.fgrid"
    p.write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(CorruptFileError):
        read_fgrid(p)


def test_truncated_values(tmp_path, field):
    p = tmp_path / "f.fgrid"
    write_fgrid(field, p)
    p.write_bytes(p.read_bytes()[:-5])
    with pytest.raises(CorruptFileError):
        read_fgrid(p)


def test_truncated_axis_table(tmp_path):
    p = tmp_path / "f.fgrid"
    p.write_bytes(b"FGRD" + struct.pack("<IB", 1, 2) + bytes(10))
    with pytest.raises(CorruptFileError):
        read_fgrid(p)


def test_unsupported_version(tmp_path, field):
    p = tmp_path / "f.fgrid"
    write_fgrid(field, p)
    data = bytearray(p.read_bytes())
    data[4] = 99
    p.write_bytes(bytes(data))
    with pytest.raises(CorruptFileError):
        read_fgrid(p)


def test_sample_dir_round_trip(tmp_path, field):
    fields = [field, field * 2.0, field * -1.0]
    manifest = write_sample_dir(tmp_path / "set", fields, {"family": "heat"})
    assert manifest["files"] == [sample_filename(i) for i in range(3)]
    back, m2 = read_sample_dir(tmp_path / "set")
    assert m2["family"] == "heat"
    assert len(back) == 3
    for a, b in zip(fields, back):
        assert np.array_equal(a.values, b.values)
    for name, digest in manifest["hashes"].items():
        assert sha256_file(tmp_path / "set" / name) == digest


def test_empty_dir_rejected(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(CorruptFileError):
        read_sample_dir(tmp_path / "empty")
