"""Quadrature on horizon balls: Gauss rules, symmetric point sets, meshfree weights."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .kernels import NonlocalKernelSpec, ball_volume, eval_window

__all__ = [
    "BallRule",
    "gauss_ball",
    "SymmetricPointSet",
    "build_symmetric_set",
    "check_symmetry",
    "MeshfreeWeights",
    "rk_weights",
    "gmls_weights",
    "ReproductionReport",
    "verify_reproduction",
    "monomial_exponents",
    "ball_integral_separable",
]

MIN_BALL_POINTS = 100


@dataclass(frozen=True)
class BallRule:
    """Points ``s_i`` in the closed ball of radius ``delta`` and positive weights."""

    points: np.ndarray
    weights: np.ndarray
    delta: float

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.weights)


def gauss_ball(delta: float, n_r: int = 25, n_theta: int = 40, d: int = 2) -> BallRule:
    """Gauss-Legendre product rule on B_delta(0).

    In 2D the rule is polar: Gauss-Legendre in r on (0, delta) with the
    Jacobian folded into the weights, and Gauss-Legendre in theta applied
    per quadrant when ``n_theta`` is divisible by 4 (one panel on (0, 2 pi)
    otherwise). The quadrant split keeps the coordinate axes, where tensor
    RK shape functions break at a node, on panel boundaries. In 1D it is a
    Gauss-Legendre rule with ``n_r`` points on each of (-delta, 0) and
    (0, delta).

    At least 100 points are always used; small requests are scaled up.
    """
    if n_r < 1 or n_theta < 1:
        raise ValueError("n_r and n_theta must be positive")
    if delta <= 0:
        raise ValueError("delta must be positive")
    if d == 1:
        n = max(n_r, MIN_BALL_POINTS // 2)
        t, w = np.polynomial.legendre.leggauss(n)
        half = 0.5 * delta * (t + 1.0)
        pts = np.concatenate([-half[::-1], half])[:, None]
        wts = np.concatenate([w[::-1], w]) * 0.5 * delta
        return BallRule(pts, wts, float(delta))
    if d != 2:
        raise ValueError("gauss_ball supports d = 1 and d = 2")
    while n_r * n_theta < MIN_BALL_POINTS:
        n_r, n_theta = n_r + 1, n_theta + 4
    tr, wr = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * delta * (tr + 1.0)
    wr = 0.5 * delta * wr * r
    panels = 4 if n_theta % 4 == 0 else 1
    tt, wt = np.polynomial.legendre.leggauss(n_theta // panels)
    width = 2.0 * np.pi / panels
    theta = np.concatenate([width * (p + 0.5 * (tt + 1.0)) for p in range(panels)])
    wtheta = np.tile(0.5 * width * wt, panels)
    R, T = np.meshgrid(r, theta, indexing="ij")
    pts = np.stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()], axis=1)
    wts = np.outer(wr, wtheta).ravel()
    return BallRule(pts, wts, float(delta))


@dataclass(frozen=True)
class SymmetricPointSet:
    """Lattice points eps1 * k with |eps1 k| <= 1, normalized to the unit ball."""

    points: np.ndarray
    eps1: float

    @property
    def count(self) -> int:
        return len(self.points)

    @property
    def d(self) -> int:
        return self.points.shape[1]


def check_symmetry(points: np.ndarray, tol: float = 1e-12) -> None:
    """Raise ``ValueError`` unless the set is closed under sign flips and axis swaps."""
    pts = np.asarray(points, dtype=float)
    d = pts.shape[1]
    key = {tuple(np.round(p / tol).astype(np.int64)) for p in pts}
    maps = []
    for j in range(d):
        sign = np.ones(d)
        sign[j] = -1.0
        maps.append(lambda p, sign=sign: p * sign)
    for perm in itertools.permutations(range(d)):
        maps.append(lambda p, perm=perm: p[list(perm)])
    for p in pts:
        for m in maps:
            if tuple(np.round(m(p) / tol).astype(np.int64)) not in key:
                raise ValueError(f"point set is not symmetric: image of {p} missing")


def build_symmetric_set(delta: float, eps: float, d: int = 2) -> SymmetricPointSet:
    """Lattice points eps*k inside the closed ball of radius delta, origin included.

    Raises
    ------
    ValueError
        If delta / eps < 1 or the set has fewer than 4d points.
    """
    ratio = delta / eps
    if ratio < 1.0 - 1e-12:
        raise ValueError("delta / eps must be at least 1")
    m = int(np.floor(ratio + 1e-9))
    axis = np.arange(-m, m + 1)
    k = np.stack([g.ravel() for g in np.meshgrid(*([axis] * d), indexing="ij")], axis=1)
    keep = np.sum(k.astype(float) ** 2, axis=1) <= ratio**2 * (1 + 1e-12)
    pts = k[keep] / ratio
    if len(pts) < 4 * d:
        raise ValueError(f"symmetric set has {len(pts)} points; at least {4 * d} are required")
    check_symmetry(pts)
    return SymmetricPointSet(pts, 1.0 / ratio)


@dataclass(frozen=True)
class MeshfreeWeights:
    """Unit-ball quadrature weights omega(s) in point-set order.

    The physical weights are omega_delta(s) = delta^d omega(s / delta).
    """

    weights: np.ndarray
    denom: float | None = None
    method: str = "rk"

    def scaled(self, delta: float, d: int) -> np.ndarray:
        """Physical weights omega_delta at the points delta * s."""
        return delta**d * self.weights


def _unit_profile(profile) -> Callable:
    if isinstance(profile, NonlocalKernelSpec):
        return profile.unit_profile
    return profile


def rk_weights(pset: SymmetricPointSet, profile) -> MeshfreeWeights:
    """Closed-form RK weights omega(s) = phi(|s|) |s|^2 / D.

    D = m4 in 1D and (d - 1) m22 + m40 otherwise, with moments
    m_alpha = sum_s s^alpha rho(|s|) phi(|s|). ``profile`` is the normalized
    unit profile (or a kernel spec), so that sum omega rho s_j^2 = 1.
    """
    rho = _unit_profile(profile)
    s = pset.points
    r = np.linalg.norm(s, axis=1)
    rp = np.asarray(rho(r), dtype=float) * eval_window(r)
    if pset.d == 1:
        denom = float(np.sum(s[:, 0] ** 4 * rp))
    else:
        m40 = np.sum(s[:, 0] ** 4 * rp)
        m22 = np.sum(s[:, 0] ** 2 * s[:, 1] ** 2 * rp)
        denom = float((pset.d - 1) * m22 + m40)
    if not denom > 0.0:
        raise ValueError("degenerate point set: RK weight denominator vanishes")
    return MeshfreeWeights(eval_window(r) * r**2 / denom, denom, "rk")


def monomial_exponents(d: int, max_degree: int, min_degree: int = 1) -> list:
    """Exponent tuples ordered by degree, then reverse lexicographically.

    For d = 2 and degrees 1..2 this is (1,0), (0,1), (2,0), (1,1), (0,2).
    """
    out = []
    for deg in range(min_degree, max_degree + 1):
        exps = [e for e in itertools.product(range(deg + 1), repeat=d) if sum(e) == deg]
        out.extend(sorted(exps, reverse=True))
    return out


def _targets(exps) -> np.ndarray:
    return np.array([1.0 if sum(e) == 2 and max(e) == 2 else 0.0 for e in exps])


def gmls_weights(pset: SymmetricPointSet, profile, W: Callable | None = None) -> MeshfreeWeights:
    """GMLS weights: the minimizer of sum omega^2 / W under the reproduction constraints.

    Constraints are sum omega rho s^alpha = H_alpha for 1 <= |alpha| <= 2,
    with H = 1 for pure squares and 0 otherwise. The closed form
    omega = W rho P^T (P rho W rho P^T)^+ H uses a pseudoinverse for
    rank-deficient systems. ``W`` defaults to phi / rho, under which
    W rho = phi. Points where W vanishes receive zero weight.

    Raises
    ------
    ValueError
        If the constraints cannot be met to 1e-8.
    """
    rho = _unit_profile(profile)
    s = pset.points
    r = np.linalg.norm(s, axis=1)
    rv = np.asarray(rho(r), dtype=float)
    if W is None:
        wr = eval_window(r)                      # W rho = phi
    else:
        wv = np.asarray(W(r), dtype=float)
        if np.any(wv < 0):
            raise ValueError("GMLS weight function must be nonnegative")
        wr = wv * rv
    exps = monomial_exponents(pset.d, 2)
    P = np.stack([np.prod(s ** np.asarray(e), axis=1) for e in exps], axis=0)
    A = P * rv                                    # constraint matrix
    H = _targets(exps)
    G = (P * rv * wr) @ P.T
    lam = np.linalg.pinv(G, rcond=1e-13, hermitian=True) @ H
    omega = wr * (P.T @ lam)
    resid = A @ omega - H
    worst = int(np.argmax(np.abs(resid)))
    if abs(resid[worst]) > 1e-8:
        raise ValueError(f"GMLS constraints infeasible: monomial {exps[worst]} "
                         f"violated by {resid[worst]:.3e}")
    return MeshfreeWeights(omega, None, "gmls")


@dataclass(frozen=True)
class ReproductionReport:
    """Residuals of sum omega rho s^alpha against the targets, 1 <= |alpha| <= 3."""

    residuals: dict = field(default_factory=dict)

    @property
    def max_violation(self) -> float:
        return max(abs(v) for v in self.residuals.values())


def verify_reproduction(pset: SymmetricPointSet, weights, profile) -> ReproductionReport:
    """Check odd and mixed moments vanish and pure second moments equal 1."""
    rho = _unit_profile(profile)
    w = weights.weights if isinstance(weights, MeshfreeWeights) else np.asarray(weights)
    s = pset.points
    rv = np.asarray(rho(np.linalg.norm(s, axis=1)), dtype=float)
    exps = monomial_exponents(pset.d, 3)
    tgt = _targets(exps)
    res = {}
    for e, t in zip(exps, tgt):
        res[e] = float(np.sum(w * rv * np.prod(s ** np.asarray(e), axis=1)) - t)
    return ReproductionReport(res)


def ball_integral_separable(factors, delta: float, n_gauss: int = 24):
    """Integral over B_delta(0) of prod_j f_j(s_j) for piecewise polynomials f_j.

    ``factors`` holds one :class:`scipy.interpolate.PPoly` per dimension
    (d = 1 or 2); trailing coefficient dimensions are carried through. The
    inner integral uses the exact antiderivative and the outer one the
    substitution s_1 = delta sin(theta) with Gauss-Legendre on each smooth
    piece, so the result is exact to round-off.
    """
    if len(factors) == 1:
        F = factors[0].antiderivative()
        return F(delta) - F(-delta)
    if len(factors) != 2:
        raise ValueError("separable ball integrals support d = 1 and d = 2")
    f1, f2 = factors
    F2 = f2.antiderivative()
    cuts = [-0.5 * np.pi, 0.5 * np.pi]
    for b in f1.x:
        if -delta < b < delta:
            cuts.append(np.arcsin(b / delta))
    for b in f2.x:
        if -delta < b < delta:
            c = np.arccos(abs(b) / delta)
            cuts.extend([c, -c])
    cuts = np.unique(np.clip(cuts, -0.5 * np.pi, 0.5 * np.pi))
    # keep pieces short so the fixed rule resolves the trigonometric factors
    fine = [cuts[0]]
    for a, b in zip(cuts[:-1], cuts[1:]):
        n = max(1, int(np.ceil((b - a) / (np.pi / 16))))
        fine.extend(np.linspace(a, b, n + 1)[1:])
    edges = np.asarray(fine)
    t, w = np.polynomial.legendre.leggauss(n_gauss)
    lo, hi = edges[:-1, None], edges[1:, None]
    theta = (0.5 * (hi - lo) * t + 0.5 * (hi + lo)).ravel()
    wt = (0.5 * (hi - lo) * w).ravel()
    s1 = delta * np.sin(theta)
    half = delta * np.cos(theta)
    inner = F2(half) - F2(-half)
    vals = f1(s1) * inner
    jac = wt * delta * np.cos(theta)
    return np.tensordot(jac, vals, axes=([0], [0]))
