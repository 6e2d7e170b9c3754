# ===================================
# tests/test_state_file.py
# ===================================
import numpy as np
import pytest

from gpe_solver.core.exceptions import DimensionError, StateFileError
from gpe_solver.services.mesh_service import build_mesh
from gpe_solver.utils.state_file import MAGIC, read_state, write_state

from tests.conftest import random_state


def test_round_trip_is_bit_exact(tmp_path, small_mesh):
    state = random_state(small_mesh, seed=2)
    path = write_state(tmp_path / "u.gpst", state)
    header, loaded = read_state(path, small_mesh)
    assert header.n == 8 and header.split == "right-diagonal"
    assert loaded.coeffs.tobytes() == state.coeffs.tobytes()


def test_mesh_rebuilt_from_header(tmp_path, small_mesh):
    state = random_state(small_mesh, seed=2)
    path = write_state(tmp_path / "u.gpst", state)
    _, loaded = read_state(path)
    assert loaded.mesh.same_as(small_mesh)
    assert np.array_equal(loaded.coeffs, state.coeffs)


def test_little_endian_layout(tmp_path, small_mesh):
    state = random_state(small_mesh, seed=2)
    data = write_state(tmp_path / "u.gpst", state).read_bytes()
    assert data[:4] == MAGIC
    assert int.from_bytes(data[4:8], "little") == 1
    assert np.frombuffer(data[-8:], dtype="<f8")[0] == state.coeffs[-1]


def test_mesh_mismatch(tmp_path, small_mesh):
    path = write_state(tmp_path / "u.gpst", random_state(small_mesh))
    with pytest.raises(DimensionError):
        read_state(path, build_mesh(6.0, 6.0, 10))
    with pytest.raises(DimensionError):
        read_state(path, build_mesh(5.0, 6.0, 8))


def test_bad_magic(tmp_path, small_mesh):
    path = write_state(tmp_path / "u.gpst", random_state(small_mesh))
    data = bytearray(path.read_bytes())
    data[:4] = b"NOPE"
    path.write_bytes(bytes(data))
    with pytest.raises(StateFileError):
        read_state(path)


def test_truncated_payload(tmp_path, small_mesh):
    path = write_state(tmp_path / "u.gpst", random_state(small_mesh))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(StateFileError):
        read_state(path)


def test_missing_file(tmp_path):
    with pytest.raises(StateFileError):
        read_state(tmp_path / "absent.gpst")
