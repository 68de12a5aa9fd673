"""Linear reproducing-kernel shape functions with support a = 2h."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .grid import GridSpec
from .kernels import eval_window, eval_window_deriv

__all__ = [
    "RKBasis",
    "MomentSystem",
    "shape_eval",
    "interpolant",
    "projector",
    "moments_1d",
    "moment_system",
    "verify_correction_constant",
    "composite_gauss_1d",
    "tensor_eval",
    "discrete_norm",
]


@dataclass(frozen=True)
class RKBasis:
    """Tensor-product RK basis Psi_k(x) = prod_j phi(|x_j - k_j h_j| / (2 h_j))."""

    grid: GridSpec

    @property
    def a(self) -> tuple:
        return tuple(2.0 * hj for hj in self.grid.h)

    def coefficient_array(self, nodes, values) -> np.ndarray:
        """Dense coefficient array over the grid's index box, zero elsewhere."""
        c = np.zeros(self.grid.shape)
        nodes = np.atleast_2d(nodes)
        if len(nodes):
            idx = tuple((nodes - np.asarray(self.grid.index_lo)).T)
            c[idx] = values
        return c


def _window_1d(t, order: int = 0):
    """phi(|t|) and its x-derivatives in units of the scaled variable t."""
    at = np.abs(t)
    if order == 0:
        return eval_window(at)
    if order == 1:
        return np.sign(t) * eval_window_deriv(at, 1)
    return eval_window_deriv(at, 2)


def shape_eval(basis: RKBasis, k, x) -> np.ndarray:
    """Psi_k at points ``x`` of shape (n, d) (or a single point)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    k = np.asarray(k, dtype=float)
    h = np.asarray(basis.grid.h)
    t = (x - k * h) / (2.0 * h)
    return np.prod(eval_window(np.abs(t)), axis=1)


def _axis_stencil(xj, hj, order=0):
    """Indices and window values of the four nodes whose support may contain xj."""
    base = np.floor(xj / hj).astype(np.int64)
    ks = base[:, None] + np.arange(-1, 3)[None, :]
    t = (xj[:, None] - ks * hj) / (2.0 * hj)
    w = _window_1d(t, order) / (2.0 * hj) ** order
    return ks, w


def interpolant(basis: RKBasis, coeffs: np.ndarray):
    """Return the callable i^h(u)(x, deriv=None) for a dense coefficient array.

    At most 4^d terms are touched per point; indices outside the grid box
    contribute zero.
    """
    grid = basis.grid
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != grid.shape:
        raise ValueError("coefficient array must match the grid index box")
    lo = np.asarray(grid.index_lo)
    shape = np.asarray(grid.shape)

    def evaluate(x, deriv=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        order = (0,) * grid.d if deriv is None else tuple(deriv)
        stencils = [_axis_stencil(x[:, j], grid.h[j], order[j]) for j in range(grid.d)]
        out = np.zeros(len(x))
        for combo in itertools.product(range(4), repeat=grid.d):
            w = np.ones(len(x))
            pos = []
            for j, c in enumerate(combo):
                ks, wj = stencils[j]
                w = w * wj[:, c]
                pos.append(ks[:, c] - lo[j])
            pos = np.stack(pos, axis=1)
            ok = np.all((pos >= 0) & (pos < shape), axis=1)
            vals = np.zeros(len(x))
            vals[ok] = coeffs[tuple(pos[ok].T)]
            out += w * vals
        return out

    return evaluate


def projector(basis: RKBasis, f):
    """Pi^h f = i^h(r^h f) using every node of the grid box."""
    k = basis.grid.all_indices()
    vals = np.asarray(f(basis.grid.coords(k)), dtype=float)
    return interpolant(basis, vals.reshape(basis.grid.shape))


def moments_1d(x, h: float, a: float, max_order: int = 3) -> np.ndarray:
    """Discrete moments m_q(x) = sum_k phi(|x - x_k| / a) (x - x_k)^q, q <= max_order.

    The node lattice is x_k = k h. Returns shape (len(x), max_order + 1).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    reach = int(np.ceil(a / h)) + 1
    base = np.floor(x / h).astype(np.int64)
    ks = base[:, None] + np.arange(-reach, reach + 1)[None, :]
    dx = x[:, None] - ks * h
    w = eval_window(np.abs(dx) / a)
    return np.stack([np.sum(w * dx**q, axis=1) for q in range(max_order + 1)], axis=1)


@dataclass(frozen=True)
class MomentSystem:
    """Linear (p = 1) moment system at a point.

    Attributes
    ----------
    H : list of tuple
        Monomial exponents of the basis vector H(x - x_k).
    M : ndarray
        Moment matrix sum_k H H^T phi_a.
    b : ndarray
        Solution of M b = H(0).
    """

    H: list
    M: np.ndarray
    b: np.ndarray


def moment_system(grid: GridSpec, a, x) -> MomentSystem:
    """Assemble and solve the p = 1 moment system at a single point ``x``."""
    d = grid.d
    a = np.broadcast_to(np.asarray(a, dtype=float), (d,))
    x = np.asarray(x, dtype=float)
    h = np.asarray(grid.h)
    reach = np.ceil(a / h).astype(int) + 1
    base = np.floor(x / h).astype(int)
    axes = [np.arange(base[j] - reach[j], base[j] + reach[j] + 1) for j in range(d)]
    k = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    dx = x - k * h
    w = np.prod(eval_window(np.abs(dx) / a), axis=1)
    exps = [(0,) * d] + [tuple(int(i == j) for i in range(d)) for j in range(d)]
    Hm = np.stack([np.prod(dx ** np.asarray(e), axis=1) for e in exps], axis=0)
    M = (Hm * w) @ Hm.T
    rhs = np.zeros(len(exps))
    rhs[0] = 1.0
    b = np.linalg.solve(M, rhs)
    return MomentSystem(exps, M, b)


def verify_correction_constant(grid: GridSpec, a, n_samples: int = 10, seed: int = 0,
                               tol: float = 1e-12) -> bool:
    """True when the correction function C(x; x - x_k) is identically 1.

    Solves the moment system at ``n_samples`` random points and checks
    b = (1, 0, ..., 0), which makes C = H(x - x_k)^T b equal to 1.
    A singular moment matrix counts as failure.
    """
    rng = np.random.default_rng(seed)
    h = np.asarray(grid.h)
    target = np.zeros(grid.d + 1)
    target[0] = 1.0
    for _ in range(n_samples):
        x = rng.uniform(-5.0, 5.0, size=grid.d) * h
        try:
            ms = moment_system(grid, a, x)
        except np.linalg.LinAlgError:
            return False
        if np.max(np.abs(ms.b - target)) > tol:
            return False
    return True


def composite_gauss_1d(a: float, b: float, h: float, n: int = 4):
    """Gauss-Legendre rule on [a, b] split at every multiple of h/2."""
    half = 0.5 * h
    inner = np.arange(np.floor(a / half) + 1, np.ceil(b / half)) * half
    breaks = np.unique(np.concatenate([[a], inner[(inner > a) & (inner < b)], [b]]))
    t, w = np.polynomial.legendre.leggauss(n)
    lo, hi = breaks[:-1, None], breaks[1:, None]
    pts = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
    wts = 0.5 * (hi - lo) * w
    return pts.ravel(), wts.ravel()


def _axis_matrix(points, grid: GridSpec, j: int, order: int = 0) -> np.ndarray:
    ks, w = _axis_stencil(points, grid.h[j], order)
    B = np.zeros((len(points), grid.shape[j]))
    pos = ks - grid.index_lo[j]
    ok = (pos >= 0) & (pos < grid.shape[j])
    rows = np.broadcast_to(np.arange(len(points))[:, None], ks.shape)
    np.add.at(B, (rows[ok], pos[ok]), w[ok])
    return B


def tensor_eval(basis: RKBasis, coeffs: np.ndarray, axis_points, deriv=None) -> np.ndarray:
    """Evaluate i^h(u) on the tensor product of 1D point sets."""
    grid = basis.grid
    order = (0,) * grid.d if deriv is None else tuple(deriv)
    out = np.asarray(coeffs, dtype=float)
    for j in range(grid.d):
        B = _axis_matrix(np.asarray(axis_points[j], dtype=float), grid, j, order[j])
        # contract axis j; tensordot moves the new axis last, so cycle through
        out = np.tensordot(out, B, axes=([0], [1]))
    return out


def discrete_norm(basis: RKBasis, coeffs: np.ndarray) -> float:
    """|(u_k)|_h: the L2(R^d) norm of i^h(u_k), computed exactly.

    Composite 4-point Gauss rules on half-cells cover the support; the
    integrand is piecewise polynomial of degree 6 per axis, so the rule is
    exact up to round-off.
    """
    grid = basis.grid
    coeffs = np.asarray(coeffs, dtype=float)
    nz = np.argwhere(coeffs != 0.0)
    if len(nz) == 0:
        return 0.0
    pts, wts = [], []
    for j in range(grid.d):
        kmin = nz[:, j].min() + grid.index_lo[j] - 2
        kmax = nz[:, j].max() + grid.index_lo[j] + 2
        p, w = composite_gauss_1d(kmin * grid.h[j], kmax * grid.h[j], grid.h[j])
        pts.append(p)
        wts.append(w)
    vals = tensor_eval(basis, coeffs, pts)
    W = wts[0]
    for w in wts[1:]:
        W = np.multiply.outer(W, w)
    return float(np.sqrt(np.sum(W * vals**2)))
