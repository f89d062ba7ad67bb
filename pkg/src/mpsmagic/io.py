"""On-disk container for MPS tensors and text records for DMRG runs.

Container layout (all integers little-endian)::

    bytes 0-7    magic b"MPSMAGIC"
    bytes 8-9    format version, uint16 (currently 1)
    bytes 10-13  header length H in bytes, uint32
    next H bytes UTF-8 JSON header:
                 {"num_sites": N, "local_dim": d, "bond_dims": [1, chi_1, ..., 1],
                  "canonical_center": int or null, "log_norm": float}
    payload      site tensors 0..N-1 in order, each (chi_left, d, chi_right)
                 row-major, every entry 8-byte real then 8-byte imaginary
                 (numpy dtype '<c16')

Site index k of the spin-1 tensors corresponds to S^z = (0, +1, -1)[k].
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .mps import MatrixProductState

if TYPE_CHECKING:
    from .dmrg import DmrgResult
    from .model import ModelParams

__all__ = ["MAGIC", "FORMAT_VERSION", "save_mps", "load_mps", "write_dmrg_record", "read_dmrg_records"]

MAGIC = b"MPSMAGIC"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sHI")
_DTYPE = np.dtype("<c16")


class ContainerError(ValueError):
    pass


def save_mps(path: str | Path, state: MatrixProductState) -> None:
    header = json.dumps(
        {
            "num_sites": state.num_sites,
            "local_dim": state.local_dim,
            "bond_dims": state.bond_dims,
            "canonical_center": state.canonical_center,
            "log_norm": state.log_norm,
        }
    ).encode()
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)))
        fh.write(header)
        for t in state.site_tensors:
            fh.write(np.ascontiguousarray(t, dtype=_DTYPE).tobytes())


def load_mps(path: str | Path) -> MatrixProductState:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise ContainerError("file too short for an MPS container")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise ContainerError("not an MPS container (bad magic)")
    if version != FORMAT_VERSION:
        raise ContainerError(f"unsupported container version {version}")
    start = _PREFIX.size
    header = json.loads(raw[start : start + hlen].decode())
    offset = start + hlen
    d = int(header["local_dim"])
    bonds = [int(b) for b in header["bond_dims"]]
    if len(bonds) != header["num_sites"] + 1:
        raise ContainerError("bond list does not match num_sites")
    tensors = []
    for left, right in zip(bonds[:-1], bonds[1:]):
        count = left * d * right
        end = offset + count * _DTYPE.itemsize
        if end > len(raw):
            raise ContainerError("truncated payload")
        tensors.append(np.frombuffer(raw, dtype=_DTYPE, count=count, offset=offset).reshape(left, d, right).copy())
        offset = end
    if offset != len(raw):
        raise ContainerError("trailing bytes after payload")
    return MatrixProductState(tuple(tensors), d, header["canonical_center"], float(header["log_norm"]))


def write_dmrg_record(path: str | Path, params: ModelParams, result: DmrgResult, chi_max: int, seed: int | None) -> None:
    """Append one JSON line describing a DMRG run."""
    rec = {
        "params": asdict(params),
        "chi_max": chi_max,
        "seed": seed,
        "energy": result.energy,
        "converged": result.converged,
        "sweeps": len(result.sweep_energies),
        "sweep_energies": result.sweep_energies,
        "truncation_weights": result.truncation_weights,
        "bond_dims": result.state.bond_dims,
    }
    with open(path, "a") as fh:
        fh.write(json.dumps(rec) + "\n")


def read_dmrg_records(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
