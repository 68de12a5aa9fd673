"""Nonlocal and quasi-discrete operators, and collocation assembly."""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .grid import GridSpec, NodePartition
from .kernels import NonlocalKernelSpec, eval_scaled_kernel, eval_window
from .quadrature import BallRule, MeshfreeWeights, SymmetricPointSet

__all__ = [
    "MeshfreeRule",
    "DifferenceStencil",
    "difference_stencil",
    "apply_nonlocal",
    "apply_quasi_discrete",
    "apply_stencil",
    "CollocationSystem",
    "assemble",
    "offset_matrix",
    "nnz_bound",
    "export_triplets",
    "thread_count",
]


@dataclass(frozen=True)
class MeshfreeRule:
    """Symmetric point set with its meshfree weights (the quasi-discrete backend)."""

    pset: SymmetricPointSet
    weights: MeshfreeWeights


@dataclass(frozen=True)
class DifferenceStencil:
    """Discrete operator L u(x) = sum_i q_i (u(x + s_i) - u(x))."""

    displacements: np.ndarray
    coeffs: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.coeffs))


def difference_stencil(kernel: NonlocalKernelSpec, backend) -> DifferenceStencil:
    """Fold kernel and quadrature weights into a single difference stencil.

    For a :class:`BallRule`: q_i = w_i rho_delta(|s_i|). For a
    :class:`MeshfreeRule`: q = 2 omega_delta(delta t) rho_delta(delta |t|),
    with the leading factor 2 of the quasi-discrete operator. Zero
    coefficients are dropped.
    """
    if isinstance(backend, BallRule):
        if abs(backend.delta - kernel.delta) > 1e-14 * kernel.delta:
            raise ValueError("ball rule radius differs from the kernel horizon")
        s = backend.points
        q = backend.weights * eval_scaled_kernel(kernel, s)
    elif isinstance(backend, MeshfreeRule):
        s = kernel.delta * backend.pset.points
        q = 2.0 * backend.weights.scaled(kernel.delta, kernel.d) * eval_scaled_kernel(kernel, s)
    else:
        raise TypeError("backend must be a BallRule or a MeshfreeRule")
    keep = q != 0.0
    return DifferenceStencil(np.ascontiguousarray(s[keep]), q[keep])


def apply_stencil(field, x, stencil: DifferenceStencil) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    s = stencil.displacements
    out = np.empty(len(x))
    for n, xp in enumerate(x):
        out[n] = np.dot(stencil.coeffs, np.asarray(field(xp + s)) - np.asarray(field(xp[None, :]))[0])
    return out


def apply_nonlocal(field, x, kernel: NonlocalKernelSpec, rule: BallRule) -> np.ndarray:
    """L_delta field at the points ``x`` using a ball rule."""
    return apply_stencil(field, x, difference_stencil(kernel, rule))


def apply_quasi_discrete(field, x, kernel: NonlocalKernelSpec, pset: SymmetricPointSet,
                         weights: MeshfreeWeights) -> np.ndarray:
    """L^eps_delta field = 2 sum omega_delta rho_delta (field(x + delta s) - field(x))."""
    return apply_stencil(field, x, difference_stencil(kernel, MeshfreeRule(pset, weights)))


def thread_count() -> int:
    """Worker count for row-wise assembly, capped by ``NLRK_THREADS``."""
    env = os.environ.get("NLRK_THREADS")
    n = os.cpu_count() or 1
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            warnings.warn(f"ignoring non-integer NLRK_THREADS={env!r}", RuntimeWarning)
    return n


def _reach(grid: GridSpec, delta: float) -> np.ndarray:
    h = np.asarray(grid.h)
    return np.ceil((delta + 2.0 * h) / h - 1e-12).astype(int)


def nnz_bound(grid: GridSpec, delta: float) -> int:
    """Upper bound prod_j (2 ceil((delta + 2 h_j) / h_j) + 1) on entries per row."""
    return int(np.prod(2 * _reach(grid, delta) + 1))


def offset_matrix(grid: GridSpec, stencil: DifferenceStencil) -> tuple[np.ndarray, np.ndarray]:
    """Entries -L Psi_{k'}(x_k) as a function of the offset m = k - k'.

    Translation invariance of the grid reduces assembly to one table: the
    shape function Psi_0 is evaluated exactly at m h + s_i for each offset.
    Returns the offsets (n, d) and their values, exact zeros dropped.
    """
    h = np.asarray(grid.h)
    reach = _reach(grid, float(np.max(np.linalg.norm(stencil.displacements, axis=1), initial=0.0)))
    axes = [np.arange(-reach[j], reach[j] + 1) for j in range(grid.d)]
    s, q = stencil.displacements, stencil.coeffs
    table = None
    base = None
    for j in range(grid.d):
        phi_s = eval_window(np.abs(axes[j][:, None] * h[j] + s[None, :, j]) / (2.0 * h[j]))
        phi_0 = eval_window(np.abs(axes[j] * h[j]) / (2.0 * h[j]))
        if table is None:
            table = phi_s * q[None, :]
            base = phi_0
        else:
            table = table[..., None, :] * phi_s
            base = np.multiply.outer(base, phi_0)
    moved = table.sum(axis=-1)
    vals = -(moved - stencil.total * base)
    mesh = np.meshgrid(*axes, indexing="ij")
    offs = np.stack([m.ravel() for m in mesh], axis=1)
    vals = vals.ravel()
    keep = vals != 0.0
    return offs[keep], vals[keep]


@dataclass
class CollocationSystem:
    """Sparse collocation system A u = b on the unknown nodes.

    Attributes
    ----------
    matrix : scipy.sparse.csr_matrix
        Entries -L Psi_{k'}(x_k) for unknown k, k'.
    coupling : scipy.sparse.csr_matrix
        The same entries for constrained columns k'.
    rhs : ndarray
        r^h f - coupling @ constrained_values.
    """

    matrix: sparse.csr_matrix
    coupling: sparse.csr_matrix
    rhs: np.ndarray
    source: np.ndarray
    unknown: np.ndarray
    constrained: np.ndarray
    constrained_values: np.ndarray
    grid: GridSpec

    @property
    def n_unknown(self) -> int:
        return len(self.unknown)

    def residual(self, u_unknown) -> np.ndarray:
        return self.matrix @ u_unknown - self.rhs

    def full_coefficients(self, u_unknown) -> np.ndarray:
        """Dense coefficient array over the grid box with constrained values filled in."""
        c = np.zeros(self.grid.shape)
        lo = np.asarray(self.grid.index_lo)
        c[tuple((self.unknown - lo).T)] = u_unknown
        if len(self.constrained):
            c[tuple((self.constrained - lo).T)] = self.constrained_values
        return c


def _lookup(grid: GridSpec, nodes: np.ndarray) -> np.ndarray:
    table = np.full(grid.shape, -1, dtype=np.int64)
    if len(nodes):
        table[tuple((nodes - np.asarray(grid.index_lo)).T)] = np.arange(len(nodes))
    return table


def _stencil_triplets(grid, partition, stencil):
    offs, vals = offset_matrix(grid, stencil)
    rows_all, cols_all, vals_all = [], [], []
    U = partition.unknown
    for m, v in zip(offs, vals):
        rows_all.append(np.arange(len(U)))
        cols_all.append(U - m)
        vals_all.append(np.full(len(U), v))
    if not rows_all:
        return np.zeros(0, int), np.zeros((0, grid.d), int), np.zeros(0)
    return np.concatenate(rows_all), np.concatenate(cols_all), np.concatenate(vals_all)


def _row_entries(grid, k, stencil):
    h = np.asarray(grid.h)
    x = k * h
    pts = x + stencil.displacements
    lo = np.floor(pts.min(axis=0) / h).astype(int) - 2
    hi = np.ceil(pts.max(axis=0) / h).astype(int) + 2
    lo = np.minimum(lo, k - 2)
    hi = np.maximum(hi, k + 2)
    axes = [np.arange(lo[j], hi[j] + 1) for j in range(grid.d)]
    cols = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    vals = np.empty(len(cols))
    for n, kc in enumerate(cols):
        t = np.abs(pts - kc * h) / (2.0 * h)
        psi = np.prod(eval_window(t), axis=1)
        psi0 = np.prod(eval_window(np.abs(x - kc * h) / (2.0 * h)))
        vals[n] = -np.dot(stencil.coeffs, psi - psi0)
    keep = vals != 0.0
    return cols[keep], vals[keep]


def _rowwise_triplets(grid, partition, stencil, threads):
    U = partition.unknown
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(lambda k: _row_entries(grid, k, stencil), U))
    rows = np.concatenate([np.full(len(r[1]), i) for i, r in enumerate(results)])
    cols = np.concatenate([r[0] for r in results])
    vals = np.concatenate([r[1] for r in results])
    return rows, cols, vals


def assemble(grid: GridSpec, partition: NodePartition, kernel: NonlocalKernelSpec, backend,
             f, g, method: str = "stencil", threads: int | None = None) -> CollocationSystem:
    """Assemble the collocation system for -L u = f with Dirichlet data g.

    Constrained coefficients are set to g at their nodes and moved to the
    right-hand side. ``method="stencil"`` uses the offset table of
    :func:`offset_matrix`; ``method="rows"`` evaluates every row
    independently (reference path, parallel over rows).

    Raises
    ------
    ValueError
        If there are no unknown nodes, or a nonzero entry reaches a node
        outside the partition.
    """
    if partition.n_unknown == 0:
        raise ValueError("no unknown nodes to assemble")
    if isinstance(backend, BallRule) and kernel.delta < 0.1 * grid.h_min:
        warnings.warn("horizon below h/10: ball points see few basis breakpoints",
                      RuntimeWarning)
    stencil = difference_stencil(kernel, backend)
    if method == "stencil":
        rows, cols, vals = _stencil_triplets(grid, partition, stencil)
    elif method == "rows":
        rows, cols, vals = _rowwise_triplets(grid, partition, stencil, threads or thread_count())
    else:
        raise ValueError(f"unknown assembly method {method!r}")
    lo = np.asarray(grid.index_lo)
    pos = cols - lo
    inside = np.all((pos >= 0) & (pos < np.asarray(grid.shape)), axis=1)
    if not inside.all():
        raise ValueError("stencil reaches outside the grid index box")
    u_map = _lookup(grid, partition.unknown)[tuple(pos.T)]
    c_map = _lookup(grid, partition.constrained)[tuple(pos.T)]
    if np.any((u_map < 0) & (c_map < 0)):
        raise ValueError("nonzero entry references a node outside the partition")
    n_u, n_c = partition.n_unknown, len(partition.constrained)
    isu = u_map >= 0
    A = sparse.csr_matrix((vals[isu], (rows[isu], u_map[isu])), shape=(n_u, n_u))
    B = sparse.csr_matrix((vals[~isu], (rows[~isu], c_map[~isu])), shape=(n_u, n_c))
    A.sort_indices()
    B.sort_indices()
    xu = grid.coords(partition.unknown)
    fu = np.asarray(f(xu), dtype=float).reshape(n_u)
    gv = (np.asarray(g(grid.coords(partition.constrained)), dtype=float).reshape(n_c)
          if n_c else np.zeros(0))
    return CollocationSystem(A, B, fu - B @ gv, fu, partition.unknown, partition.constrained,
                             gv, grid)


def export_triplets(system: CollocationSystem, path) -> None:
    """Write the unknown-block matrix as ``row col value`` lines."""
    coo = system.matrix.tocoo()
    with open(path, "w") as fh:
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")
