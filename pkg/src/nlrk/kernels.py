"""Window function and radial nonlocal kernels."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import gamma

__all__ = [
    "eval_window",
    "eval_window_deriv",
    "sphere_area",
    "ball_volume",
    "normalize_profile",
    "NonlocalKernelSpec",
    "make_kernel",
    "eval_scaled_kernel",
]


def eval_window(x):
    """Cubic B-spline window.

    phi(x) = 2/3 - 4x^2 + 4x^3 on [0, 1/2], 4/3 (1 - x)^3 on [1/2, 1] and
    zero elsewhere. Callers pass ``|x|``; negative input returns 0.
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inner = (x >= 0.0) & (x <= 0.5)
    outer = (x > 0.5) & (x < 1.0)
    xi = x[inner]
    out[inner] = 2.0 / 3.0 - 4.0 * xi**2 + 4.0 * xi**3
    out[outer] = 4.0 / 3.0 * (1.0 - x[outer]) ** 3
    return out if out.ndim else float(out)


def eval_window_deriv(x, order: int = 1):
    """Derivative of :func:`eval_window` with respect to its argument on [0, 1)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inner = (x >= 0.0) & (x <= 0.5)
    outer = (x > 0.5) & (x < 1.0)
    xi, xo = x[inner], x[outer]
    if order == 1:
        out[inner] = -8.0 * xi + 12.0 * xi**2
        out[outer] = -4.0 * (1.0 - xo) ** 2
    elif order == 2:
        out[inner] = -8.0 + 24.0 * xi
        out[outer] = 8.0 * (1.0 - xo)
    else:
        raise ValueError("order must be 1 or 2")
    return out if out.ndim else float(out)


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d (2 for d=1)."""
    return 2.0 * math.pi ** (d / 2) / gamma(d / 2)


def ball_volume(d: int, radius: float = 1.0) -> float:
    return math.pi ** (d / 2) / gamma(d / 2 + 1) * radius**d


def _radial_moment(profile: Callable, d: int, power: int) -> tuple[float, float]:
    # adaptive Gauss-Kronrod on [0, 1]; profiles may be steep near 0
    val, err = integrate.quad(
        lambda t: float(profile(t)) * t ** (d - 1 + power),
        0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200,
    )
    return sphere_area(d) * val, sphere_area(d) * err


def normalize_profile(profile: Callable, d: int) -> float:
    """Constant c with ``int_{B_1} c rho(|s|) |s|^2 ds = 2d``.

    Raises
    ------
    ValueError
        If the second moment is not finite or not positive.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            m2, err = _radial_moment(profile, d, 2)
        except integrate.IntegrationWarning as exc:
            raise ValueError(f"second moment of profile did not converge: {exc}") from exc
    if not np.isfinite(m2) or m2 <= 0.0:
        raise ValueError("profile must have a finite positive second moment")
    if err > 1e-10 * abs(m2):
        warnings.warn("normalization quadrature above 1e-10 relative error", RuntimeWarning)
    return 2.0 * d / m2


def _constant_profile(t):
    return np.ones_like(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class NonlocalKernelSpec:
    """Radial kernel rho_delta(|s|) = c / delta^(d+2) * rho(|s| / delta) on the closed ball.

    Attributes
    ----------
    profile : callable
        Unnormalized profile rho(t) on [0, 1], vectorized.
    delta : float
        Horizon.
    d : int
        Spatial dimension.
    norm_const : float
        Normalization c from :func:`normalize_profile`.
    name : str
        Label used in reports; ``"constant"`` enables closed forms elsewhere.
    """

    profile: Callable
    delta: float
    d: int
    norm_const: float
    name: str = "custom"

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.d < 1:
            raise ValueError("dimension must be positive")

    def unit_profile(self, t):
        """Normalized unit-horizon profile c*rho(t), zero for t > 1."""
        t = np.asarray(t, dtype=float)
        val = self.norm_const * np.asarray(self.profile(np.minimum(t, 1.0)), dtype=float)
        return np.where(t <= 1.0, val, 0.0)

    def with_delta(self, delta: float) -> "NonlocalKernelSpec":
        return NonlocalKernelSpec(self.profile, delta, self.d, self.norm_const, self.name)

    @property
    def is_constant(self) -> bool:
        return self.name == "constant"

    def boundary_value(self) -> float:
        """Normalized profile value c*rho(1) at the rim of the unit ball."""
        return float(self.norm_const * np.asarray(self.profile(np.array([1.0])))[0])

    def second_moment(self) -> float:
        m2, _ = _radial_moment(self.unit_profile, self.d, 2)
        return m2


def make_kernel(name: str, delta: float, d: int = 2) -> NonlocalKernelSpec:
    """Kernel factory.

    ``"constant"`` gives rho = 1; ``"poly:p"`` gives rho = (1 - t)^p.
    """
    if name == "constant":
        profile = _constant_profile
    elif name.startswith("poly:"):
        p = float(name.split(":", 1)[1])

        def profile(t, p=p):
            return np.clip(1.0 - np.asarray(t, dtype=float), 0.0, None) ** p
    else:
        raise ValueError(f"unknown kernel profile {name!r}")
    return NonlocalKernelSpec(profile, float(delta), d, normalize_profile(profile, d), name)


def eval_scaled_kernel(spec: NonlocalKernelSpec, s) -> np.ndarray:
    """rho_delta(|s|) for displacement vectors ``s`` of shape (..., d)."""
    s = np.asarray(s, dtype=float)
    if s.ndim == 0 or s.shape[-1] != spec.d:
        s = s.reshape(*s.shape, 1) if spec.d == 1 else s
    r = np.linalg.norm(s, axis=-1)
    scale = 1.0 / spec.delta ** (spec.d + 2)
    return scale * spec.unit_profile(r / spec.delta)
