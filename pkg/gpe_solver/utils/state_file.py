# ===================================
# utils/state_file.py
# ===================================
"""
Binary state files, little-endian:

    "GPST" | u32 version | f64 Lx | f64 Ly | u32 n | u32 split tag | u64 count | count x f64

The payload holds the interleaved (Re, Im) coefficients of the interior
nodes in row-major (y, x) order.
"""
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from gpe_solver.core.exceptions import DimensionError, StateFileError
from gpe_solver.services.forms_service import State
from gpe_solver.services.mesh_service import SPLIT_TAGS, Mesh, build_mesh

logger = logging.getLogger(__name__)

MAGIC = b"GPST"
VERSION = 1
_HEADER = struct.Struct("<4sIddIIQ")


@dataclass(frozen=True)
class StateHeader:
    version: int
    Lx: float
    Ly: float
    n: int
    split: str
    count: int


def write_state(path: Union[str, Path], state: State) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mesh = state.mesh
    Lx, Ly = mesh.domain_half_widths
    header = _HEADER.pack(MAGIC, VERSION, Lx, Ly, mesh.subdivisions, SPLIT_TAGS[mesh.split], state.coeffs.size)
    with open(path, "wb") as f:
        f.write(header)
        f.write(state.coeffs.astype("<f8").tobytes())
    logger.debug(f"Wrote state ({state.coeffs.size} coefficients) to {path}")
    return path


def read_header(data: bytes) -> StateHeader:
    if len(data) < _HEADER.size:
        raise StateFileError(f"State file too short for its header ({len(data)} bytes)")
    magic, version, Lx, Ly, n, tag, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise StateFileError(f"Not a state file (magic {magic!r})")
    if version != VERSION:
        raise StateFileError(f"Unsupported state file version {version}")
    splits = {v: k for k, v in SPLIT_TAGS.items()}
    if tag not in splits:
        raise StateFileError(f"Unknown mesh split tag {tag}")
    return StateHeader(version=version, Lx=Lx, Ly=Ly, n=n, split=splits[tag], count=count)


def read_state(path: Union[str, Path], mesh: Optional[Mesh] = None) -> Tuple[StateHeader, State]:
    """Load a state; with a mesh given, its parameters must match the header."""
    path = Path(path)
    if not path.exists():
        raise StateFileError(f"State file {path} does not exist")
    data = path.read_bytes()
    header = read_header(data)
    payload = data[_HEADER.size:]
    if len(payload) != 8 * header.count:
        raise StateFileError(f"Truncated payload: expected {header.count} values, found {len(payload) // 8}")
    if mesh is None:
        mesh = build_mesh(header.Lx, header.Ly, header.n)
    else:
        Lx, Ly = mesh.domain_half_widths
        if (header.Lx, header.Ly, header.n, header.split) != (Lx, Ly, mesh.subdivisions, mesh.split):
            raise DimensionError(
                f"State file mesh ({header.Lx}, {header.Ly}, n={header.n}, {header.split}) does not match "
                f"({Lx}, {Ly}, n={mesh.subdivisions}, {mesh.split})"
            )
    coeffs = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return header, State(coeffs=coeffs, mesh=mesh)
