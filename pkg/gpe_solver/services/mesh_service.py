# ===================================
# services/mesh_service.py
# ===================================
"""
Structured P1 triangulation of a rectangle [-Lx, Lx] x [-Ly, Ly].

Nodes are numbered row-major by (y, x); every square cell is cut along the
same diagonal (lower-left to upper-right). Only interior nodes carry degrees
of freedom (homogeneous Dirichlet boundary).
"""
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from gpe_solver.core.exceptions import InterpolationError, InvalidMeshError

logger = logging.getLogger(__name__)

SPLIT_RIGHT_DIAGONAL = "right-diagonal"
SPLIT_TAGS = {SPLIT_RIGHT_DIAGONAL: 0}

# Symmetric 6-point Gauss rule of degree 4 on the reference triangle
_A1 = 0.44594849091596488632
_W1 = 0.22338158967801146570
_A2 = 0.091576213509770743460
_W2 = 0.10995174365532186764


@dataclass(frozen=True)
class Quadrature:
    barycentric: np.ndarray  # (Q, 3)
    weights: np.ndarray  # (Q,), sums to the reference area 1/2
    order: int

    @property
    def size(self) -> int:
        return len(self.weights)


def gauss_rule_order4() -> Quadrature:
    pts = []
    wts = []
    for a, w in ((_A1, _W1), (_A2, _W2)):
        b = 1.0 - 2.0 * a
        for bary in ((b, a, a), (a, b, a), (a, a, b)):
            pts.append(bary)
            wts.append(0.5 * w)
    return Quadrature(barycentric=np.array(pts), weights=np.array(wts), order=4)


@dataclass(frozen=True)
class Mesh:
    domain_half_widths: tuple
    nodes_per_side: tuple  # interior grid lines (nx, ny)
    subdivisions: int
    node_coords: np.ndarray  # (n_nodes, 2)
    triangles: np.ndarray  # (n_tri, 3)
    interior_index: np.ndarray  # node -> dof, -1 on the boundary
    quadrature: Quadrature
    split: str = SPLIT_RIGHT_DIAGONAL
    # per-element geometry, filled by build_mesh
    det: np.ndarray = field(default=None, repr=False)  # |det J| = 2 * area
    grad_bary: np.ndarray = field(default=None, repr=False)  # (n_tri, 3, 2)
    quad_points: np.ndarray = field(default=None, repr=False)  # (n_tri, Q, 2)

    @property
    def n_nodes(self) -> int:
        return len(self.node_coords)

    @property
    def n_dofs(self) -> int:
        """Number of interior nodes N (the real layout has 2N entries)."""
        return int(self.nodes_per_side[0] * self.nodes_per_side[1])

    @property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.interior_index >= 0)

    @property
    def areas(self) -> np.ndarray:
        return 0.5 * self.det

    @property
    def h(self) -> float:
        Lx, Ly = self.domain_half_widths
        return 2.0 * max(Lx, Ly) / self.subdivisions

    def element_dofs(self) -> np.ndarray:
        return self.interior_index[self.triangles]

    def element_integral(self, values: np.ndarray) -> float:
        """Integrate values given per element and quadrature point, shape (n_tri, Q)."""
        return float(np.einsum("q,e,eq->", self.quadrature.weights, self.det, values))

    def at_quadrature(self, nodal: np.ndarray) -> np.ndarray:
        """P1 interpolant of full nodal values evaluated at quadrature points, shape (n_tri, Q)."""
        return np.einsum("qa,ea->eq", self.quadrature.barycentric, nodal[self.triangles])

    def same_as(self, other: "Mesh") -> bool:
        return (
            self is other
            or (
                self.domain_half_widths == other.domain_half_widths
                and self.subdivisions == other.subdivisions
                and self.split == other.split
            )
        )


def build_mesh(Lx: float, Ly: float, n: int) -> Mesh:
    """Uniform mesh of [-Lx, Lx] x [-Ly, Ly] with n subdivisions per axis."""
    if n < 2:
        raise InvalidMeshError(f"Mesh needs at least 2 subdivisions per axis, got n={n}")
    if not (Lx > 0 and Ly > 0):
        raise InvalidMeshError(f"Domain half widths must be positive, got ({Lx}, {Ly})")

    xs = np.linspace(-Lx, Lx, n + 1)
    ys = np.linspace(-Ly, Ly, n + 1)
    X, Y = np.meshgrid(xs, ys)  # row-major by (y, x)
    coords = np.column_stack([X.ravel(), Y.ravel()])

    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    ll = idx[:-1, :-1].ravel()
    lr = idx[:-1, 1:].ravel()
    ur = idx[1:, 1:].ravel()
    ul = idx[1:, :-1].ravel()
    lower = np.column_stack([ll, lr, ur])
    upper = np.column_stack([ll, ur, ul])
    triangles = np.empty((2 * len(ll), 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    interior = np.full((n + 1) ** 2, -1, dtype=np.int64)
    inner = idx[1:-1, 1:-1].ravel()
    interior[inner] = np.arange(len(inner))

    quad = gauss_rule_order4()
    p = coords[triangles]  # (E, 3, 2)
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    signed = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    # gradients of barycentric coordinates: rows of inv(J)^T
    inv_t = np.empty((len(triangles), 2, 2))
    inv_t[:, 0, 0] = e2[:, 1] / signed
    inv_t[:, 0, 1] = -e2[:, 0] / signed
    inv_t[:, 1, 0] = -e1[:, 1] / signed
    inv_t[:, 1, 1] = e1[:, 0] / signed
    grad = np.empty((len(triangles), 3, 2))
    grad[:, 1] = inv_t[:, 0]
    grad[:, 2] = inv_t[:, 1]
    grad[:, 0] = -grad[:, 1] - grad[:, 2]
    qpts = np.einsum("qa,ead->eqd", quad.barycentric, p)

    mesh = Mesh(
        domain_half_widths=(float(Lx), float(Ly)),
        nodes_per_side=(n - 1, n - 1),
        subdivisions=int(n),
        node_coords=coords,
        triangles=triangles,
        interior_index=interior,
        quadrature=quad,
        det=np.abs(signed),
        grad_bary=grad,
        quad_points=qpts,
    )
    logger.debug(f"Built mesh n={n} on [-{Lx},{Lx}]x[-{Ly},{Ly}]: {mesh.n_dofs} interior nodes")
    return mesh


def signed_areas(mesh: Mesh) -> np.ndarray:
    p = mesh.node_coords[mesh.triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def interpolate(mesh: Mesh, f: Callable[[np.ndarray, np.ndarray], np.ndarray]):
    """Nodal interpolation of a complex function; boundary values are dropped (not normalized)."""
    from gpe_solver.services.forms_service import State

    nodes = mesh.interior_nodes
    x, y = mesh.node_coords[nodes, 0], mesh.node_coords[nodes, 1]
    values = np.asarray(f(x, y), dtype=complex) * np.ones(len(nodes))
    bad = ~np.isfinite(values)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise InterpolationError(f"Non-finite value {values[k]} at node ({x[k]}, {y[k]})")
    coeffs = np.empty(2 * len(nodes))
    coeffs[0::2] = values.real
    coeffs[1::2] = values.imag
    return State(coeffs=coeffs, mesh=mesh)


def nodal_grid(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Scatter per-interior-node values onto the full (n+1) x (n+1) grid."""
    full = np.zeros(mesh.n_nodes, dtype=values.dtype)
    full[mesh.interior_nodes] = values
    n = mesh.subdivisions
    return full.reshape(n + 1, n + 1)


# ===================================
# Built-in starting profiles
# ===================================

def vortex_profile(x, y):
    return (x + 1j * y) / np.sqrt(np.pi) * np.exp(-(x ** 2 + y ** 2) / 2.0)


def gaussian_profile(x, y):
    return np.exp(-(x ** 2 + y ** 2) / 2.0) / np.sqrt(np.pi) + 0j


PROFILES = {
    "vortex": vortex_profile,
    "gaussian": gaussian_profile,
}
