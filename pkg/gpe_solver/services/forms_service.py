# ===================================
# services/forms_service.py
# ===================================
"""
Bilinear forms and nonlinear functionals over the real DOF layout.

A complex nodal value z_k is stored as the pair (Re z_k, Im z_k) at positions
(2k, 2k+1). A Hermitian scalar matrix H = Hr + i Hi acting on complex
coefficients becomes the real symmetric matrix kron(Hr, I2) + kron(Hi, J)
with J = [[0, -1], [1, 0]].
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from gpe_solver.core.config import settings
from gpe_solver.core.exceptions import (
    AdmissibilityError,
    DegenerateIterateError,
    DimensionError,
)
from gpe_solver.models.model_params import ModelParams
from gpe_solver.services.mesh_service import Mesh

logger = logging.getLogger(__name__)

_I2 = sp.identity(2, format="csr")
_J = sp.csr_matrix(np.array([[0.0, -1.0], [1.0, 0.0]]))
_UNIT = {
    (s, t): sp.csr_matrix(([1.0], ([s], [t])), shape=(2, 2))
    for s in range(2)
    for t in range(2)
}


def _sparse(A: sp.spmatrix) -> sp.csr_matrix:
    A = A.tocsr()
    A.eliminate_zeros()
    return A


def _kron(A: sp.spmatrix, B: sp.spmatrix) -> sp.csr_matrix:
    # format="csr" avoids the BSR path, which stores every 2 x 2 block in full
    return _sparse(sp.kron(A, B, format="csr"))


@dataclass
class State:
    """Discrete complex H^1_0 function, interleaved (Re, Im) per interior node."""

    coeffs: np.ndarray
    mesh: Mesh

    def __post_init__(self):
        self.coeffs = np.ascontiguousarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (2 * self.mesh.n_dofs,):
            raise DimensionError(
                f"State has {self.coeffs.size} coefficients, mesh expects {2 * self.mesh.n_dofs}"
            )

    @classmethod
    def from_values(cls, mesh: Mesh, values: np.ndarray) -> "State":
        values = np.ascontiguousarray(values, dtype=np.complex128)
        return cls(coeffs=values.view(np.float64).copy(), mesh=mesh)

    @classmethod
    def zeros(cls, mesh: Mesh) -> "State":
        return cls(coeffs=np.zeros(2 * mesh.n_dofs), mesh=mesh)

    @property
    def values(self) -> np.ndarray:
        """Complex nodal values on interior nodes (a view)."""
        return self.coeffs.view(np.complex128)

    def with_coeffs(self, coeffs: np.ndarray) -> "State":
        return State(coeffs=coeffs, mesh=self.mesh)

    def copy(self) -> "State":
        return State(coeffs=self.coeffs.copy(), mesh=self.mesh)

    def full_values(self) -> np.ndarray:
        full = np.zeros(self.mesh.n_nodes, dtype=np.complex128)
        full[self.mesh.interior_nodes] = self.values
        return full

    def at_quadrature(self) -> np.ndarray:
        """P1 interpolant at the quadrature points, complex array (n_tri, Q)."""
        return self.mesh.at_quadrature(self.full_values())


@dataclass
class FormSet:
    S: sp.csr_matrix
    M: sp.csr_matrix
    mesh: Mesh
    params: ModelParams
    admissibility_ok: bool
    admissibility_margin: float = float("nan")
    stiffness: sp.csr_matrix = field(default=None, repr=False)  # scalar Dirichlet stiffness
    mass_scalar: sp.csr_matrix = field(default=None, repr=False)
    threads: int = 1
    _mass_lu: object = field(default=None, repr=False)
    _h1: Optional[sp.csr_matrix] = field(default=None, repr=False)
    _h1_lu: object = field(default=None, repr=False)

    @property
    def beta(self) -> float:
        return self.params.beta

    @property
    def size(self) -> int:
        return self.M.shape[0]

    def check(self, *states: State):
        for s in states:
            if s.coeffs.shape[0] != self.size or not s.mesh.same_as(self.mesh):
                raise DimensionError("State lives on a different mesh than the forms")

    def l2_inner(self, a: State, b: State) -> float:
        return float(a.coeffs @ (self.M @ b.coeffs))

    def r_inner(self, a: State, b: State) -> float:
        return float(a.coeffs @ (self.S @ b.coeffs))

    def mass(self, u: State) -> float:
        return self.l2_inner(u, u)

    def normalize(self, u: State) -> Tuple[State, float]:
        """Return u / ||u||_L2 and ||u||_L2."""
        m = self.mass(u)
        if not np.isfinite(m) or m <= 0.0:
            raise DegenerateIterateError(f"Cannot normalize a state with mass {m}")
        norm = float(np.sqrt(m))
        return u.with_coeffs(u.coeffs / norm), norm

    def mass_solve(self, b: np.ndarray) -> np.ndarray:
        if self._mass_lu is None:
            self._mass_lu = splu(self.M.tocsc())
        return self._mass_lu.solve(b)

    @property
    def h1(self) -> sp.csr_matrix:
        """X = (.,.)_L2 + (grad ., grad .), the plain H^1 metric."""
        if self._h1 is None:
            self._h1 = _sparse(self.M + _kron(self.stiffness, _I2))
        return self._h1

    def h1_solve(self, b: np.ndarray) -> np.ndarray:
        if self._h1_lu is None:
            self._h1_lu = splu(self.h1.tocsc())
        return self._h1_lu.solve(b)


# ===================================
# element kernels
# ===================================

def _weighted_mass_kernel(mesh: Mesh, weight: np.ndarray, chunk: slice) -> np.ndarray:
    phi = mesh.quadrature.barycentric
    w = mesh.quadrature.weights
    return np.einsum("q,e,eq,qa,qb->eab", w, mesh.det[chunk], weight[chunk], phi, phi)


def _stiffness_kernel(mesh: Mesh, chunk: slice) -> np.ndarray:
    g = mesh.grad_bary[chunk]
    return 0.5 * mesh.det[chunk, None, None] * np.einsum("ead,ebd->eab", g, g)


def _rotation_gradient(mesh: Mesh, chunk: slice) -> np.ndarray:
    """R(x) . grad(phi_a) at quadrature points with R = (x2, -x1); shape (E, Q, 3)."""
    x = mesh.quad_points[chunk, :, 0]
    y = mesh.quad_points[chunk, :, 1]
    g = mesh.grad_bary[chunk]
    return y[:, :, None] * g[:, None, :, 0] - x[:, :, None] * g[:, None, :, 1]


def _covariant_rotation_kernel(mesh: Mesh, chunk: slice) -> np.ndarray:
    # int phi_b R.grad(phi_a) - phi_a R.grad(phi_b), row a, column b
    phi = mesh.quadrature.barycentric
    w = mesh.quadrature.weights
    rg = _rotation_gradient(mesh, chunk)
    t = np.einsum("q,e,qb,eqa->eab", w, mesh.det[chunk], phi, rg)
    return t - t.transpose(0, 2, 1)


def _angular_momentum_kernel(mesh: Mesh, chunk: slice) -> np.ndarray:
    # int phi_a (x1 d2 phi_b - x2 d1 phi_b) = -int phi_a R.grad(phi_b)
    phi = mesh.quadrature.barycentric
    w = mesh.quadrature.weights
    rg = _rotation_gradient(mesh, chunk)
    return -np.einsum("q,e,qa,eqb->eab", w, mesh.det[chunk], phi, rg)


class FormsService:
    def __init__(self):
        self.threads = settings.THREADS
        self.admissibility_K = settings.ADMISSIBILITY_K

    # ---------- assembly plumbing ----------

    def _element_matrices(self, mesh: Mesh, kernel: Callable[[slice], np.ndarray], threads: int) -> np.ndarray:
        n_tri = len(mesh.triangles)
        if threads <= 1 or n_tri < 2048:
            return kernel(slice(0, n_tri))
        bounds = np.linspace(0, n_tri, threads + 1, dtype=int)
        chunks = [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(kernel, chunks))
        return np.concatenate(parts, axis=0)

    def _scatter(self, mesh: Mesh, element: np.ndarray) -> sp.csr_matrix:
        dofs = mesh.element_dofs()
        rows = np.broadcast_to(dofs[:, :, None], element.shape)
        cols = np.broadcast_to(dofs[:, None, :], element.shape)
        keep = (rows >= 0) & (cols >= 0)
        n = mesh.n_dofs
        return sp.coo_matrix((element[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()

    def _scalar_weighted_mass(self, mesh: Mesh, weight: np.ndarray, threads: int = None) -> sp.csr_matrix:
        threads = threads or self.threads
        element = self._element_matrices(mesh, lambda c: _weighted_mass_kernel(mesh, weight, c), threads)
        return self._scatter(mesh, element)

    @staticmethod
    def to_real(Hr: sp.spmatrix, Hi: Optional[sp.spmatrix] = None) -> sp.csr_matrix:
        """Real 2N x 2N matrix of the Hermitian form Hr + i Hi."""
        A = _kron(Hr, _I2)
        if Hi is not None:
            A = A + _kron(Hi, _J)
        return _sparse(A)

    # ---------- base forms ----------

    def check_admissibility(self, mesh: Mesh, params: ModelParams, K: Optional[float] = None) -> float:
        """min over quadrature points of V - (1+K) Omega^2 |x|^2 / 4 (also covers V >= 0)."""
        K = params.trap_margin_K if K is None else K
        K = self.admissibility_K if K is None else K
        x = mesh.quad_points[..., 0]
        y = mesh.quad_points[..., 1]
        V = params.potential(x, y)
        margin = V - (1.0 + K) * params.omega ** 2 * (x ** 2 + y ** 2) / 4.0
        return float(min(margin.min(), V.min()))

    def assemble_base(
        self, mesh: Mesh, params: ModelParams, strict: bool = False, threads: int = None
    ) -> FormSet:
        """S from the covariant gradient form, M the L2 mass matrix."""
        threads = threads or self.threads
        margin = self.check_admissibility(mesh, params)
        ok = margin >= 0.0
        if not ok:
            message = (
                f"Trap admissibility violated: min V - (1+K) Omega^2 |x|^2/4 = {margin:.6g} "
                f"for Omega={params.omega}, V={params.potential}"
            )
            if strict:
                raise AdmissibilityError(message, margin)
            logger.warning(message)

        x = mesh.quad_points[..., 0]
        y = mesh.quad_points[..., 1]
        V = params.potential(x, y)
        # |grad_R v|^2 contributes Omega^2|x|^2/4, which cancels the shift in V_R
        K = self._scatter(mesh, self._element_matrices(mesh, lambda c: _stiffness_kernel(mesh, c), threads))
        Ms = self._scalar_weighted_mass(mesh, np.ones_like(V), threads)
        MV = self._scalar_weighted_mass(mesh, V, threads)
        Hr = K + MV
        Hi = None
        if params.omega != 0.0:
            rot = self._element_matrices(mesh, lambda c: _covariant_rotation_kernel(mesh, c), threads)
            Hi = 0.5 * params.omega * self._scatter(mesh, rot)

        forms = FormSet(
            S=self.to_real(Hr, Hi),
            M=self.to_real(Ms),
            mesh=mesh,
            params=params,
            admissibility_ok=ok,
            admissibility_margin=margin,
            stiffness=K,
            mass_scalar=Ms,
            threads=threads,
        )
        logger.info(
            f"Assembled forms: {forms.size} real DOFs, beta={params.beta}, omega={params.omega}, "
            f"admissible={ok}"
        )
        return forms

    def assemble_base_l3(self, mesh: Mesh, params: ModelParams) -> sp.csr_matrix:
        """S through (grad v, grad w) + (V v, w) - Omega (L3 v, w)."""
        x = mesh.quad_points[..., 0]
        y = mesh.quad_points[..., 1]
        V = params.potential(x, y)
        K = self._scatter(mesh, _stiffness_kernel(mesh, slice(None)))
        Hr = K + self._scalar_weighted_mass(mesh, V, 1)
        Hi = params.omega * self._scatter(mesh, _angular_momentum_kernel(mesh, slice(None)))
        return self.to_real(Hr, Hi)

    def h1_matrix(self, forms: FormSet) -> sp.csr_matrix:
        return forms.h1

    # ---------- state-dependent matrices ----------

    def assemble_weighted_mass(self, forms: FormSet, u: State) -> sp.csr_matrix:
        """M_u: Re int |u|^2 v conj(w)."""
        forms.check(u)
        uq = u.at_quadrature()
        return self.to_real(self._scalar_weighted_mass(forms.mesh, np.abs(uq) ** 2, forms.threads))

    def assemble_xi_matrices(self, forms: FormSet, u: State, d: State) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
        """(Xi_ud, Xi_dd) with weights Re(u conj d) and |d|^2, one quadrature sweep."""
        forms.check(u, d)
        uq = u.at_quadrature()
        dq = d.at_quadrature()
        mesh = forms.mesh
        both = np.stack([(uq * np.conj(dq)).real, np.abs(dq) ** 2])
        phi = mesh.quadrature.barycentric
        element = np.einsum("q,e,keq,qa,qb->keab", mesh.quadrature.weights, mesh.det, both, phi, phi)
        xi_ud = self.to_real(self._scatter(mesh, element[0]))
        xi_dd = self.to_real(self._scatter(mesh, element[1]))
        return xi_ud, xi_dd

    def assemble_coupling(self, forms: FormSet, a: State, b: State) -> sp.csr_matrix:
        """Matrix of h -> (Re(a conj h) b, .)_L2; symmetric when a = b."""
        forms.check(a, b)
        aq = a.at_quadrature()
        bq = b.at_quadrature()
        a_parts = (aq.real, aq.imag)
        b_parts = (bq.real, bq.imag)
        blocks = None
        for s in range(2):
            for t in range(2):
                Mw = self._scalar_weighted_mass(forms.mesh, b_parts[s] * a_parts[t], forms.threads)
                term = _kron(Mw, _UNIT[(s, t)])
                blocks = term if blocks is None else blocks + term
        return _sparse(blocks)

    def hessian_extra(self, forms: FormSet, u: State) -> sp.csr_matrix:
        """N_u: Re int Re(u conj v) u conj(w)."""
        return self.assemble_coupling(forms, u, u)

    # ---------- functionals ----------

    def quartic(self, forms: FormSet, u: State) -> float:
        uq = u.at_quadrature()
        return forms.mesh.element_integral(np.abs(uq) ** 4)

    def energy(self, forms: FormSet, u: State) -> float:
        forms.check(u)
        quad = 0.5 * forms.r_inner(u, u)
        if forms.beta == 0.0:
            return quad
        return quad + 0.25 * forms.beta * self.quartic(forms, u)

    def density_defect(self, forms: FormSet, u: State, v: State) -> float:
        """int (|v|^2 - |u|^2)^2."""
        forms.check(u, v)
        diff = np.abs(v.at_quadrature()) ** 2 - np.abs(u.at_quadrature()) ** 2
        return forms.mesh.element_integral(diff ** 2)

    def density_error(self, forms: FormSet, u: State, v: State) -> float:
        return float(np.sqrt(self.density_defect(forms, u, v)))

    def quartic_integrals(self, forms: FormSet, u: State, d: State, Mu: Optional[sp.spmatrix] = None) -> dict:
        """Line-search coefficients xi0..xi4, eta1, eta2, zeta0..zeta2 (plus eta0 = ||u||^2)."""
        forms.check(u, d)
        if Mu is None:
            Mu = self.assemble_weighted_mass(forms, u)
        xi_ud, xi_dd = self.assemble_xi_matrices(forms, u, d)
        uc, dc = u.coeffs, d.coeffs
        Xud_u = xi_ud @ uc
        Xdd_u = xi_dd @ uc
        Su = forms.S @ uc
        Sd = forms.S @ dc
        Mu_c = forms.M @ uc
        return {
            "xi0": float(uc @ (Mu @ uc)),
            "xi1": float(uc @ Xud_u),
            "xi2": float(uc @ Xdd_u + 2.0 * (dc @ Xud_u)),
            "xi3": float(dc @ Xdd_u),
            "xi4": float(dc @ (xi_dd @ dc)),
            "eta0": float(uc @ Mu_c),
            "eta1": float(dc @ Mu_c),
            "eta2": float(dc @ (forms.M @ dc)),
            "zeta0": float(uc @ Su),
            "zeta1": float(dc @ Su),
            "zeta2": float(dc @ Sd),
            "xi_ud": xi_ud,
            "xi_dd": xi_dd,
        }

    # ---------- gauge and complex pairings ----------

    @staticmethod
    def gauge(u: State, omega: float) -> State:
        """G_omega u = exp(i omega) u."""
        return State.from_values(u.mesh, np.exp(1j * omega) * u.values)

    @staticmethod
    def times_i(u: State) -> State:
        return State.from_values(u.mesh, 1j * u.values)

    @staticmethod
    def complex_inner(G: sp.spmatrix, a: State, b: State) -> complex:
        """<a, b>_C = <a, b>_G + i <a, i b>_G, i.e. int a conj(b) for G = M."""
        re = float(a.coeffs @ (G @ b.coeffs))
        ib = FormsService.times_i(b)
        im = float(a.coeffs @ (G @ ib.coeffs))
        return complex(re, im)


forms_service = FormsService()
