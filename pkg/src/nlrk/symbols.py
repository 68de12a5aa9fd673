"""Fourier symbols of the nonlocal operators and their lattice sums."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import BSpline, PPoly
from scipy.special import gamma, jv

from .grid import GridSpec
from .kernels import NonlocalKernelSpec, ball_volume, sphere_area
from .operators import MeshfreeRule, difference_stencil
from .quadrature import MeshfreeWeights, SymmetricPointSet, ball_integral_separable

__all__ = [
    "lambda_delta",
    "lambda_delta_eps",
    "LatticeSumResult",
    "lattice_sum",
    "xi_grid",
    "SymbolScan",
    "scan_comparison",
    "beta_symbol",
]

_POWERS = {"G": 8, "C": 4, "C_eps": 4}
_SERIES_CUT = 2.0


def _one_minus_ratio_series(z, d):
    """1 - A(z) with A the spherical average of plane waves times d-dependent shape.

    For the constant profile the closed forms are 1 - sin z / z (d = 1)
    and 1 - 2 J1(z) / z (d = 2); both have alternating Taylor series used
    for small |z| to avoid cancellation.
    """
    z2 = (np.asarray(z, dtype=float) / 2.0) ** 2
    out = np.zeros_like(z2)
    term = np.ones_like(z2)
    for k in range(1, 30):
        if d == 1:
            # 1 - sin z/z = sum (-1)^{k+1} z^{2k} / (2k+1)!
            term = (4.0 * z2) ** k / math.factorial(2 * k + 1)
        else:
            term = z2**k / (math.factorial(k) * math.factorial(k + 1))
        out += (-1) ** (k + 1) * term
    return out


def _closed_form_ratio(z, d):
    """1 - (Fourier transform of the unit ball indicator) / |B_1| at |eta| = z."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z < _SERIES_CUT
    out[small] = _one_minus_ratio_series(z[small], d)
    zl = z[~small]
    if d == 1:
        out[~small] = 1.0 - np.sin(zl) / zl
    elif d == 2:
        out[~small] = 1.0 - 2.0 * jv(1, zl) / zl
    else:
        nu = d / 2
        out[~small] = 1.0 - gamma(nu + 1) * (2.0 / zl) ** nu * jv(nu, zl)
    return out


def _angular_average(y, d):
    """Average of cos(y e . u) over unit vectors e (cos y in 1D, J0 in 2D)."""
    y = np.asarray(y, dtype=float)
    if d == 1:
        return np.cos(y)
    if d == 2:
        return jv(0, y)
    nu = d / 2 - 1
    ys = np.where(y == 0, 1.0, y)
    return np.where(y == 0, 1.0, gamma(nu + 1) * (2.0 / ys) ** nu * jv(nu, ys))


def _one_minus_angular(y, d):
    y = np.asarray(y, dtype=float)
    if d == 1:
        return 2.0 * np.sin(0.5 * y) ** 2
    small = y < 1e-2
    out = np.empty_like(y)
    ys = y[small] ** 2
    if d == 2:
        out[small] = ys / 4 - ys**2 / 64 + ys**3 / 2304
    else:
        out[small] = ys / (2 * d) - ys**2 / (8 * d * (d + 2))
    out[~small] = 1.0 - _angular_average(y[~small], d)
    return out


@lru_cache(maxsize=8)
def _radial_rule(panels: int, n: int = 8):
    t, w = np.polynomial.legendre.leggauss(n)
    edges = np.linspace(0.0, 1.0, panels + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    return (0.5 * (hi - lo) * (t + 1) + lo).ravel(), (0.5 * (hi - lo) * w).ravel()


def _radial_transform(kernel, z, profile, one_minus: bool):
    """|S| int_0^1 profile(t) t^{d-1} g(t z) dt with g = 1 - A or A, by composite Gauss."""
    d = kernel.d
    z = np.asarray(z, dtype=float)
    zmax = float(z.max(initial=0.0))
    panels = int(min(4096, max(16, math.ceil(zmax / 2.0))))
    t, w = _radial_rule(panels)
    wt = w * np.asarray(profile(t), dtype=float) * t ** (d - 1) * sphere_area(d)
    out = np.empty(z.size)
    flat = z.ravel()
    for start in range(0, flat.size, 4096):
        zz = flat[start:start + 4096]
        arg = np.outer(zz, t)
        g = _one_minus_angular(arg, d) if one_minus else _angular_average(arg, d)
        out[start:start + 4096] = g @ wt
    return out.reshape(z.shape)


def lambda_delta(kernel: NonlocalKernelSpec, xi, method: str = "quadrature") -> np.ndarray:
    """Symbol of -L_delta: int rho_delta(|s|) (1 - cos(s . xi)) ds.

    ``method="quadrature"`` integrates radially with the spherical average
    of the plane wave; ``"closed"`` uses the closed form of the constant
    profile (series for small delta |xi|); ``"auto"`` picks the closed form
    when it applies.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0 or (kernel.d > 1 and xi.shape[-1] != kernel.d):
        xi = xi[..., None]
    z = kernel.delta * np.linalg.norm(xi, axis=-1)
    if method == "auto":
        method = "closed" if kernel.is_constant else "quadrature"
    if method == "closed":
        if not kernel.is_constant:
            raise ValueError("closed form only available for the constant profile")
        return kernel.norm_const * ball_volume(kernel.d) / kernel.delta**2 * _closed_form_ratio(z, kernel.d)
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    return _radial_transform(kernel, z, kernel.unit_profile, True) / kernel.delta**2


def lambda_delta_eps(kernel: NonlocalKernelSpec, pset: SymmetricPointSet,
                     weights: MeshfreeWeights, xi) -> np.ndarray:
    """Symbol of -L^eps_delta, leading factor 2 included.

    2 sum omega_delta rho_delta (1 - cos(s . xi)), evaluated as
    2 sin^2(s . xi / 2) to keep small frequencies accurate.
    """
    st = difference_stencil(kernel, MeshfreeRule(pset, weights))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    phase = xi @ st.displacements.T
    return (2.0 * np.sin(0.5 * phase) ** 2) @ st.coeffs


# ---------------------------------------------------------------- lattice sums

@lru_cache(maxsize=4)
def _cardinal_pieces(p: int) -> np.ndarray:
    """Polynomial pieces of the centered cardinal B-spline of order p.

    Returns c[k, i]: coefficient of tau^(p-1-k) on [i - p/2, i - p/2 + 1).
    """
    knots = np.arange(-p // 2, p // 2 + 1, dtype=float)
    pp = PPoly.from_spline(BSpline.basis_element(knots, extrapolate=False))
    c = []
    for i in range(p):
        left = knots[i]
        seg = np.searchsorted(pp.x, left, side="right") - 1
        c.append(pp.c[:, seg])
    return np.array(c).T


def _cardinal_values(p: int) -> np.ndarray:
    """M_p at the integers 0, 1, ..., p/2 - 1."""
    c = _cardinal_pieces(p)
    # piece starting at integer m has index m + p/2; its value there is the constant term
    return np.array([c[-1, m + p // 2] for m in range(p // 2)])


def _sum_weights(xi, p: int) -> np.ndarray:
    """S_p(xi) = sum_r (2 sin(xi/2) / (xi + 2 pi r))^p = sum_m M_p(m) e^{-i m xi}."""
    vals = _cardinal_values(p)
    out = np.full(np.shape(xi), vals[0])
    for m in range(1, len(vals)):
        out = out + 2.0 * vals[m] * np.cos(m * np.asarray(xi))
    return out


def _term_weights(xi_j, r_j, p: int) -> np.ndarray:
    """(2 sin(xi/2) / (xi + 2 pi r))^p with the r = 0 limit at xi = 0."""
    xi_j = np.asarray(xi_j, dtype=float)
    den = xi_j + 2.0 * np.pi * r_j
    zero = den == 0.0
    safe = np.where(zero, 1.0, den)
    base = np.where(zero, 1.0, 2.0 * np.sin(0.5 * xi_j) / safe)
    return base**p


def _phase_ppoly(xi_j, h_j: float, reach: float, p: int) -> PPoly:
    """B(s) = sum_m M_p(m + s/h) e^{-i m xi} as a piecewise polynomial in s.

    Coefficients carry a trailing axis over the frequencies ``xi_j``.
    """
    c = _cardinal_pieces(p)
    deg = p - 1
    n = int(np.ceil(reach / h_j)) + 1
    starts = np.arange(-n, n)
    idx = np.arange(p) - p // 2                      # piece index i of M_p
    phase = np.exp(-1j * np.multiply.outer(idx[None, :] - starts[:, None], xi_j))  # (n_int, p, n_xi)
    coef = np.einsum("ki,nix->knx", c, phase)
    scale = h_j ** -np.arange(deg, -1, -1, dtype=float)
    coef = coef * scale[:, None, None]
    return PPoly(coef, np.arange(-n, n + 1) * h_j, extrapolate=False)


@dataclass
class LatticeSumResult:
    """Lattice-summed symbol values with a relative tail estimate per frequency."""

    values: np.ndarray
    tail_estimate: np.ndarray
    R: int
    method: str
    warning: bool = False


def _jump_part(kernel, grid, xi, p):
    """Exact lattice sum of the kernel's rim jump via Poisson summation.

    Returns ``(constant, poisson)`` so that the jump contribution to the
    summed symbol is constant - poisson.
    """
    rim = kernel.boundary_value() / kernel.delta ** (kernel.d + 2)
    hprod = float(np.prod(grid.h))
    if rim == 0.0:
        return 0.0, np.zeros(len(xi))
    B = [_phase_ppoly(xi[:, j], grid.h[j], kernel.delta, p) for j in range(grid.d)]
    integral = ball_integral_separable(B, kernel.delta).real
    volume = ball_volume(kernel.d, kernel.delta)
    sums = np.prod([_sum_weights(xi[:, j], p) for j in range(grid.d)], axis=0)
    return hprod * rim * volume * sums, hprod * rim * integral


def _smooth_profile(kernel):
    rim = kernel.boundary_value()
    return lambda t: kernel.unit_profile(t) - rim


def _lattice_shifts(R, d):
    r = np.arange(-R, R + 1)
    mesh = np.meshgrid(*([r] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _truncated_remainder(kernel, grid, xi, p, R, profile):
    """sum_{|r_j| <= R} w_r rho_hat(eta_r) for the given (continuous) profile part."""
    h = np.asarray(grid.h)
    shifts = _lattice_shifts(R, grid.d)
    out = np.zeros(len(xi))
    shell = np.zeros(len(xi))
    outer = np.max(np.abs(shifts), axis=1) == R
    for n, x in enumerate(xi):
        w = np.prod([h[j] * _term_weights(x[j], shifts[:, j], p) for j in range(grid.d)], axis=0)
        eta = (x + 2.0 * np.pi * shifts) / h
        z = kernel.delta * np.linalg.norm(eta, axis=1)
        if kernel.is_constant and profile is None:
            # rho_hat = lambda_inf - lambda for the constant profile
            lam_inf = kernel.norm_const * ball_volume(kernel.d) / kernel.delta**2
            fhat = lam_inf * (1.0 - _closed_form_ratio(z, kernel.d))
        else:
            prof = kernel.unit_profile if profile is None else profile
            fhat = _radial_transform(kernel, z, prof, False) / kernel.delta**2
        out[n] = np.dot(w, fhat)
        shell[n] = np.max(np.abs(fhat[outer]))
    return out, shell


def _weights_outside(xi, h, p, R):
    """Total lattice weight with some |r_j| > R (closed-form total minus truncated part)."""
    d = xi.shape[1]
    r = np.arange(-R, R + 1)
    total = np.ones(len(xi))
    inner = np.ones(len(xi))
    for j in range(d):
        total *= h[j] * _sum_weights(xi[:, j], p)
        inner *= h[j] * np.sum(_term_weights(xi[:, j, None], r[None, :], p), axis=1)
    return np.maximum(total - inner, 0.0)


def lattice_sum(kind: str, kernel: NonlocalKernelSpec, grid: GridSpec, xi, R: int = 20,
                rule: MeshfreeRule | None = None, method: str = "auto") -> LatticeSumResult:
    """Lattice-summed symbols lambda_G (kind "G"), lambda_C ("C") and lambda^eps_C ("C_eps").

    The summand is 2^{p d} lambda(eta_r) prod_j h_j (sin(xi_j/2)/(xi_j + 2 pi r_j))^p
    with p = 8 for G and 4 otherwise, and eta_r = (xi + 2 pi r) / h.

    Methods
    -------
    ``"direct"``
        Plain truncation to |r_j| <= R.
    ``"accelerated"``
        lambda = lambda_inf - rho_hat; the constant part is summed in closed
        form and only rho_hat is truncated.
    ``"split"`` (default for G and C)
        As accelerated, but the rim jump of the profile is summed exactly by
        Poisson summation over the horizon ball; only the continuous rest of
        the profile is truncated. For the constant profile nothing is left.
    ``"poisson"`` (default for C_eps)
        Exact finite form of the trigonometric-polynomial symbol.
    """
    if kind not in _POWERS:
        raise ValueError(f"unknown symbol kind {kind!r}")
    p = _POWERS[kind]
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    h = np.asarray(grid.h)
    if method == "auto":
        method = "poisson" if kind == "C_eps" else "split"
    if R < 5 and method in ("direct", "accelerated"):
        raise ValueError("truncation radius must be at least 5")
    if kind == "C_eps" and rule is None:
        raise ValueError("C_eps requires the meshfree rule")

    if kind == "C_eps" and method == "poisson":
        st = difference_stencil(kernel, MeshfreeRule(rule.pset, rule.weights))
        s = st.displacements
        B = []
        for j in range(grid.d):
            pp = _phase_ppoly(xi[:, j], h[j], kernel.delta, p)
            B.append(np.nan_to_num(pp(s[:, j])))
        prod = np.prod(B, axis=0).real                           # (n_points, n_xi)
        sums = np.prod([_sum_weights(xi[:, j], p) for j in range(grid.d)], axis=0)
        vals = float(np.prod(h)) * (st.total * sums - st.coeffs @ prod)
        return LatticeSumResult(vals, np.zeros(len(xi)), R, method)

    if method == "direct":
        shifts = _lattice_shifts(R, grid.d)
        vals = np.zeros(len(xi))
        for n, x in enumerate(xi):
            w = np.prod([h[j] * _term_weights(x[j], shifts[:, j], p) for j in range(grid.d)], axis=0)
            eta = (x + 2.0 * np.pi * shifts) / h
            if kind == "C_eps":
                lam = lambda_delta_eps(kernel, rule.pset, rule.weights, eta)
            else:
                lam = lambda_delta(kernel, eta, method="auto")
            vals[n] = np.dot(w, lam)
        # the symbol is bounded by twice the total kernel mass (rule mass for C_eps)
        if kind == "C_eps":
            coeffs = difference_stencil(kernel, MeshfreeRule(rule.pset, rule.weights)).coeffs
            bound = 2.0 * float(np.sum(np.abs(coeffs)))
        else:
            bound = 2.0 * kernel.norm_const * abs(_radial_mass(kernel)) / kernel.delta**2
        tail = _weights_outside(xi, h, p, R) * bound
        return _finish(vals, tail, R, method)

    sums = np.prod([h[j] * _sum_weights(xi[:, j], p) for j in range(grid.d)], axis=0)
    if method == "accelerated":
        lam_inf = kernel.norm_const * _radial_mass(kernel) / kernel.delta**2
        rem, shell = _truncated_remainder(kernel, grid, xi, p, R, None)
        tail = _weights_outside(xi, h, p, R) * shell
        return _finish(lam_inf * sums - rem, tail, R, method)
    if method != "split":
        raise ValueError(f"unknown method {method!r}")
    const, poisson = _jump_part(kernel, grid, xi, p)
    vals = const - poisson
    tail = np.zeros(len(xi))
    smooth = _smooth_profile(kernel)
    if not kernel.is_constant:
        mass = _radial_mass(kernel) - kernel.boundary_value() / kernel.norm_const * ball_volume(kernel.d)
        lam_inf = kernel.norm_const * mass / kernel.delta**2
        rem, shell = _truncated_remainder(kernel, grid, xi, p, R, smooth)
        vals = vals + lam_inf * sums - rem
        tail = _weights_outside(xi, h, p, R) * shell
    return _finish(vals, tail, R, method)


def _radial_mass(kernel) -> float:
    """int_{B_1} rho(|s|) ds for the unnormalized profile."""
    from scipy import integrate

    val, _ = integrate.quad(lambda t: float(kernel.profile(np.array([t]))[0]) * t ** (kernel.d - 1),
                            0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    return sphere_area(kernel.d) * val


def _finish(vals, tail, R, method):
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(vals != 0, tail / np.abs(vals), tail)
    flag = bool(np.any(rel > 1e-6))
    if flag:
        warnings.warn("lattice-sum tail estimate above 1e-6 relative", RuntimeWarning)
    return LatticeSumResult(vals, rel, R, method, flag)


def beta_symbol(xi, p: int = 8) -> np.ndarray:
    """prod_j S_p(xi_j): the lattice factor relating |.|_h to the l2 norm (p = 8)."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    return np.prod([_sum_weights(xi[:, j], p) for j in range(xi.shape[1])], axis=0)


# ---------------------------------------------------------------- scans

def xi_grid(n: int, d: int = 2) -> np.ndarray:
    """Tensor grid of n points per axis strictly inside (-pi, pi)^d, origin removed.

    Odd n yields axis points pi (2i - n - 1) / (n + 1), symmetric about 0.
    """
    if n % 2 == 0:
        raise ValueError("use an odd number of points per axis")
    axis = np.pi * (2.0 * np.arange(1, n + 1) - n - 1) / (n + 1)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return pts[np.any(pts != 0.0, axis=1)]


@dataclass
class SymbolScan:
    """Symbol values on a frequency grid and the stability ratios derived from them."""

    xi_grid: np.ndarray
    values: dict = field(default_factory=dict)
    trunc_radius: int = 20
    tail_estimate: float = 0.0

    @property
    def ratio_c_g(self) -> np.ndarray:
        return self.values["C"] / self.values["G"]

    @property
    def ratio_eps_c(self) -> np.ndarray:
        return self.values["C_eps"] / self.values["C"]

    def minima(self) -> dict:
        return {"min_lambdaC_over_lambdaG": float(self.ratio_c_g.min()),
                "min_lambdaCeps_over_lambdaC": float(self.ratio_eps_c.min()),
                "max_tail_estimate": float(self.tail_estimate)}


def scan_comparison(kernel: NonlocalKernelSpec, grid: GridSpec, rule: MeshfreeRule,
                    xi, R: int = 20) -> SymbolScan:
    """Evaluate lambda_G, lambda_C and lambda^eps_C on ``xi`` and report their ratios."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if np.any(np.all(xi == 0.0, axis=1)):
        raise ValueError("frequency grid must exclude the origin")
    res = {k: lattice_sum(k, kernel, grid, xi, R, rule=rule) for k in ("G", "C", "C_eps")}
    tail = max(float(np.max(r.tail_estimate)) for r in res.values())
    return SymbolScan(xi, {k: r.values for k, r in res.items()}, R, tail)
