"""Linear solvers for collocation systems and L2 error measurement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .grid import DomainSpec
from .operators import CollocationSystem
from .rk_basis import RKBasis, composite_gauss_1d, tensor_eval

__all__ = ["SolveReport", "SolverError", "MAX_DIRECT_UNKNOWNS", "solve_direct",
           "solve_krylov", "error_l2"]

MAX_DIRECT_UNKNOWNS = 30_000


class SolverError(RuntimeError):
    """Raised when a solve fails; ``best_residual`` holds the last relative residual."""

    def __init__(self, msg: str, best_residual: float | None = None):
        super().__init__(msg)
        self.best_residual = best_residual


@dataclass
class SolveReport:
    coefficients: np.ndarray
    residual_norm: float
    method: str
    iterations: int = 0


def _rel_residual(A, u, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ u - b)
    return float(r / nb) if nb > 0 else float(r)


def _matrix(system):
    return system.matrix if isinstance(system, CollocationSystem) else sparse.csr_matrix(system[0])


def _rhs(system):
    return system.rhs if isinstance(system, CollocationSystem) else np.asarray(system[1], float)


def solve_direct(system) -> SolveReport:
    """Sparse LU with partial pivoting (SuperLU, COLAMD ordering).

    ``system`` is a :class:`CollocationSystem` or an ``(A, b)`` pair.

    Raises
    ------
    SolverError
        If the system is too large, a pivot falls below 1e-14 ||A||, or the
        relative residual exceeds 1e-10.
    """
    A, b = _matrix(system).tocsc(), _rhs(system)
    n = A.shape[0]
    if n > MAX_DIRECT_UNKNOWNS:
        raise SolverError(f"{n} unknowns exceed the direct-solver limit {MAX_DIRECT_UNKNOWNS}")
    scale = spla.norm(A, np.inf)
    try:
        lu = spla.splu(A, permc_spec="COLAMD", diag_pivot_thresh=1.0)
    except RuntimeError as exc:
        raise SolverError(f"matrix is singular: {exc}") from exc
    piv = np.abs(lu.U.diagonal())
    if piv.size and piv.min() < 1e-14 * scale:
        raise SolverError(f"pivot {piv.min():.3e} below 1e-14 * ||A||")
    u = lu.solve(b)
    res = _rel_residual(A, u, b)
    if not res <= 1e-10:
        raise SolverError(f"relative residual {res:.3e} above 1e-10", res)
    return SolveReport(u, res, "direct")


def solve_krylov(system, tol: float = 1e-12, max_iter: int = 2000, restart: int = 100) -> SolveReport:
    """Restarted GMRES with an incomplete-LU preconditioner.

    Converged when the unpreconditioned relative residual reaches ``tol``.

    Raises
    ------
    SolverError
        If ``max_iter`` inner iterations pass without convergence.
    """
    A, b = _matrix(system).tocsc(), _rhs(system)
    try:
        ilu = spla.spilu(A, drop_tol=1e-5, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve)
    except RuntimeError:
        M = None
    count = [0]

    def cb(_):
        count[0] += 1

    u, info = spla.gmres(A, b, rtol=tol, atol=0.0, restart=restart, maxiter=max(1, max_iter // restart),
                         M=M, callback=cb, callback_type="pr_norm")
    res = _rel_residual(A, u, b)
    if res > tol * 1.0001:
        raise SolverError(f"GMRES stopped after {count[0]} iterations at residual {res:.3e}", res)
    return SolveReport(u, res, "krylov", count[0])


def error_l2(basis: RKBasis, coeffs: np.ndarray, u_exact, domain: DomainSpec) -> float:
    """||u_h - u_exact||_{L2(Omega)} with 4 Gauss points per axis on half-cells.

    ``coeffs`` is the dense coefficient array over the grid box, constrained
    values included (see :meth:`CollocationSystem.full_coefficients`).
    """
    grid = basis.grid
    pts, wts = [], []
    for j in range(grid.d):
        p, w = composite_gauss_1d(domain.box_lo[j], domain.box_hi[j], grid.h[j])
        pts.append(p)
        wts.append(w)
    uh = tensor_eval(basis, coeffs, pts)
    mesh = np.meshgrid(*pts, indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=1)
    ue = np.asarray(u_exact(X), dtype=float).reshape(uh.shape)
    W = wts[0]
    for w in wts[1:]:
        W = np.multiply.outer(W, w)
    return float(np.sqrt(np.sum(W * (uh - ue) ** 2)))
