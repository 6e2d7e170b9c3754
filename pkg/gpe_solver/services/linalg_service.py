# ===================================
# services/linalg_service.py
# ===================================
"""
Sparse SPD solves and constrained generalized symmetric eigensolves.

Constraints are given as vectors c_j together with the metric G in which
orthogonality is meant (x^T G c_j = 0). Internally they are converted to the
B-metric of the pencil, y_j = B^{-1} G c_j, so that the search space is the
B-orthogonal complement of span(Y).
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import (
    ArpackNoConvergence,
    LinearOperator as ScipyLinearOperator,
    cg,
    eigsh,
    lobpcg,
    spilu,
    splu,
)

from gpe_solver.core.config import settings
from gpe_solver.core.exceptions import ConfigError, ConstraintError, ConvergenceError, EigenSolverError

logger = logging.getLogger(__name__)

MAX_GRAM_CONDITION = 1e12
# small problems are handed to the dense oracle
DENSE_LIMIT = 400


@dataclass
class LinearOperator:
    """Weighted sum of sparse matrices, e.g. S + beta * M_u."""

    terms: List[Tuple[float, sp.spmatrix]]
    _matrix: Optional[sp.csr_matrix] = field(default=None, repr=False)

    @classmethod
    def of(cls, *matrices: sp.spmatrix) -> "LinearOperator":
        return cls(terms=[(1.0, m) for m in matrices])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.terms[0][1].shape

    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None and len(self.terms) == 1 and self.terms[0][0] == 1.0:
            self._matrix = self.terms[0][1].tocsr()
        if self._matrix is None:
            total = None
            for weight, m in self.terms:
                if weight == 0.0:
                    continue
                total = weight * m if total is None else total + weight * m
            if total is None:
                total = sp.csr_matrix(self.shape)
            self._matrix = sp.csr_matrix(total)
        return self._matrix

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix() @ x

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return self.apply(x)

    def symmetry_defect(self, rng: np.random.Generator, probes: int = 3) -> float:
        """max |x^T A y - y^T A x| / (|x| |y|) over random probes."""
        worst = 0.0
        for _ in range(probes):
            x = rng.standard_normal(self.shape[0])
            y = rng.standard_normal(self.shape[0])
            gap = abs(x @ self.apply(y) - y @ self.apply(x))
            worst = max(worst, gap / (np.linalg.norm(x) * np.linalg.norm(y)))
        return worst


def as_operator(A) -> LinearOperator:
    return A if isinstance(A, LinearOperator) else LinearOperator.of(A)


@dataclass
class ConstraintSet:
    vectors: List[np.ndarray]
    metric: sp.spmatrix

    @property
    def size(self) -> int:
        return len(self.vectors)

    def as_columns(self) -> np.ndarray:
        return np.column_stack(self.vectors)

    def gram(self) -> np.ndarray:
        C = self.as_columns()
        return C.T @ (self.metric @ C)

    def defects(self, x: np.ndarray) -> np.ndarray:
        """Relative orthogonality defects |x^T G c_j| / (|x|_G |c_j|_G)."""
        Gx = self.metric @ x
        nx = np.sqrt(max(x @ Gx, 0.0))
        out = []
        for c in self.vectors:
            nc = np.sqrt(max(c @ (self.metric @ c), 0.0))
            out.append(abs(c @ Gx) / max(nx * nc, 1e-300))
        return np.array(out)


class EigenPair(NamedTuple):
    value: float
    vector: np.ndarray
    residual: float


class LinalgService:
    def __init__(self):
        self.linear_tol = settings.LINEAR_TOL
        self.linear_max_iters = settings.LINEAR_MAX_ITERS
        self.preconditioner = settings.PRECONDITIONER
        self.eigen_tol = settings.EIGEN_TOL
        self.eigen_max_iters = settings.EIGEN_MAX_ITERS

    # ---------- linear solves ----------

    def factorize(self, A) -> Callable[[np.ndarray], np.ndarray]:
        lu = splu(as_operator(A).matrix().tocsc())
        return lu.solve

    def _preconditioner(self, mat: sp.csr_matrix, kind: str):
        if kind == "jacobi":
            diag = mat.diagonal()
            inv = np.where(diag != 0.0, 1.0 / diag, 1.0)
            return sp.diags(inv)
        if kind == "ilu":
            ilu = spilu(mat.tocsc(), drop_tol=1e-5, fill_factor=10)
            return ScipyLinearOperator(mat.shape, matvec=ilu.solve)
        raise ConfigError(f"Unknown preconditioner '{kind}'")

    def solve_spd(
        self,
        A,
        b: np.ndarray,
        tol: Optional[float] = None,
        precond: Optional[str] = None,
        x0: Optional[np.ndarray] = None,
        max_iters: Optional[int] = None,
    ) -> np.ndarray:
        """x with ||A x - b|| <= tol ||b||."""
        tol = self.linear_tol if tol is None else tol
        precond = precond or self.preconditioner
        max_iters = max_iters or self.linear_max_iters
        mat = as_operator(A).matrix()
        b_norm = np.linalg.norm(b)
        if b_norm == 0.0:
            return np.zeros_like(b)

        if precond == "direct":
            x = splu(mat.tocsc()).solve(b)
        else:
            x, info = cg(
                mat,
                b,
                x0=x0,
                rtol=tol,
                atol=0.0,
                maxiter=max_iters,
                M=self._preconditioner(mat, precond),
            )
            if info < 0:
                raise ConvergenceError(f"CG breakdown (info={info})", best=x)

        residual = np.linalg.norm(mat @ x - b) / b_norm
        # cg stops on its recursive residual; allow a little roundoff on the true one
        if residual > 10.0 * tol:
            raise ConvergenceError(
                f"Linear solve stopped at relative residual {residual:.3e} > {tol:.1e} "
                f"after {max_iters} iterations ({precond} preconditioner)",
                best=x,
                residual=residual,
            )
        return x

    # ---------- constraints ----------

    def constraint_basis(
        self, B: sp.spmatrix, constraints: Optional[ConstraintSet], solve_B: Optional[Callable] = None
    ) -> Optional[np.ndarray]:
        """B-orthonormal Y spanning {B^{-1} G c_j}."""
        if constraints is None or constraints.size == 0:
            return None
        C = constraints.as_columns()
        if constraints.metric is B:
            Y = C.copy()
        else:
            solve_B = solve_B or self.factorize(B)
            GC = constraints.metric @ C
            Y = np.column_stack([solve_B(GC[:, j]) for j in range(GC.shape[1])])
        gram = Y.T @ (B @ Y)
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond > MAX_GRAM_CONDITION:
            raise ConstraintError(f"Constraint vectors are degenerate (Gram condition {cond:.3e})")
        L = sla.cholesky(gram, lower=True)
        return sla.solve_triangular(L, Y.T, lower=True).T

    @staticmethod
    def project(Y: Optional[np.ndarray], B: sp.spmatrix, x: np.ndarray) -> np.ndarray:
        if Y is None:
            return x
        return x - Y @ (Y.T @ (B @ x))

    # ---------- eigensolves ----------

    def smallest_eigenpairs(
        self,
        A,
        B,
        k: int,
        constraints: Optional[ConstraintSet] = None,
        tol: Optional[float] = None,
        sigma: float = 0.0,
        backend: str = "arpack",
        seed: int = 0,
    ) -> List[EigenPair]:
        """
        k smallest eigenpairs of A x = theta B x on the B-complement of the
        constraints, ascending, B-orthonormal. ARPACK runs in shift-invert mode
        around sigma, which must lie below the wanted part of the spectrum.
        """
        tol = self.eigen_tol if tol is None else tol
        A = as_operator(A).matrix()
        B = as_operator(B).matrix()
        n = A.shape[0]
        m = 0 if constraints is None else constraints.size
        if k < 1 or k > n - m:
            raise ConfigError(f"Cannot compute {k} eigenpairs of a pencil of size {n} with {m} constraints")

        solve_B = None if constraints is None or constraints.metric is B else self.factorize(B)
        Y = self.constraint_basis(B, constraints, solve_B)

        if n <= DENSE_LIMIT or k >= n - m - 1:
            values, vectors = self._dense(A, B, Y, k)
        elif backend == "lobpcg":
            values, vectors = self._lobpcg(A, B, Y, k, tol, seed)
        else:
            values, vectors = self._arpack(A, B, Y, k, tol, sigma, seed)

        pairs = self._finish(A, B, Y, values, vectors)
        worst = max(p.residual for p in pairs)
        logger.debug(f"Eigensolve k={k}, n={n}, constraints={m}: max residual {worst:.2e}")
        if worst > max(1e3 * tol, 1e-8):
            raise EigenSolverError(
                f"Eigenpairs did not reach tolerance (max residual {worst:.3e})",
                partial=[(p.value, p.vector) for p in pairs],
            )
        return pairs

    def _finish(self, A, B, Y, values, vectors) -> List[EigenPair]:
        order = np.argsort(values)
        pairs = []
        for j in order:
            x = self.project(Y, B, vectors[:, j])
            Bx = B @ x
            x = x / np.sqrt(x @ Bx)
            Bx = B @ x
            theta = float(x @ (A @ x))
            r = A @ x - theta * Bx
            if Y is not None:
                # residual restricted to the constrained space
                r = r - B @ (Y @ (Y.T @ r))
            res = float(np.linalg.norm(r) / max(np.linalg.norm(Bx), 1e-300))
            pairs.append(EigenPair(value=theta, vector=x, residual=res))
        pairs.sort(key=lambda p: p.value)
        return pairs

    def _arpack(self, A, B, Y, k, tol, sigma, seed):
        n = A.shape[0]
        K = splu((A - sigma * B).tocsc()).solve
        if Y is None:
            op_inv = K
        else:
            Z = np.column_stack([K(B @ Y[:, j]) for j in range(Y.shape[1])])
            small = np.linalg.inv(Y.T @ (B @ Z))

            def op_inv(f):
                x = K(f)
                return x - Z @ (small @ (Y.T @ (B @ x)))

        rng = np.random.default_rng(seed)
        v0 = self.project(Y, B, rng.standard_normal(n))
        OPinv = ScipyLinearOperator((n, n), matvec=op_inv, dtype=np.float64)
        try:
            values, vectors = eigsh(
                A,
                k=k,
                M=B,
                sigma=sigma,
                which="LM",
                v0=v0,
                tol=tol * 1e-2,
                maxiter=self.eigen_max_iters,
                OPinv=OPinv,
            )
        except ArpackNoConvergence as e:
            partial = list(zip(e.eigenvalues, e.eigenvectors.T)) if e.eigenvalues is not None else []
            raise EigenSolverError(f"ARPACK did not converge: {e}", partial=partial)
        return values, vectors

    def _lobpcg(self, A, B, Y, k, tol, seed):
        n = A.shape[0]
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((n, k))
        diag = A.diagonal()
        precond = sp.diags(np.where(diag > 0, 1.0 / diag, 1.0))
        values, vectors = lobpcg(
            A, X, B=B, M=precond, Y=Y, tol=tol, maxiter=self.eigen_max_iters, largest=False
        )
        return values, vectors

    @staticmethod
    def _dense(A, B, Y, k):
        Ad = A.toarray()
        Bd = B.toarray()
        if Y is None:
            values, vectors = sla.eigh(Ad, Bd, subset_by_index=[0, k - 1])
            return values, vectors
        W = sla.null_space((Bd @ Y).T)
        values, Z = sla.eigh(W.T @ Ad @ W, W.T @ Bd @ W, subset_by_index=[0, k - 1])
        return values, W @ Z

    def dense_oracle(self, A, B, k: int, constraints: Optional[ConstraintSet] = None) -> List[EigenPair]:
        """Full eigendecomposition of the reduced dense pencil, for checks on small meshes."""
        A = as_operator(A).matrix()
        B = as_operator(B).matrix()
        Y = self.constraint_basis(B, constraints)
        values, vectors = self._dense(A, B, Y, k)
        return self._finish(A, B, Y, values, vectors)


linalg_service = LinalgService()
