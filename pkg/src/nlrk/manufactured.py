"""Polynomial manufactured solutions and their local and nonlocal sources."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import gamma

from .kernels import NonlocalKernelSpec

__all__ = ["Polynomial", "ball_moment", "ManufacturedSolution", "manufactured", "MANUFACTURED"]


@dataclass(frozen=True)
class Polynomial:
    """Sparse multivariate polynomial {exponent tuple: coefficient}."""

    terms: tuple

    @classmethod
    def from_dict(cls, terms: dict) -> "Polynomial":
        clean = {tuple(int(v) for v in e): float(c) for e, c in terms.items() if c != 0.0}
        return cls(tuple(sorted(clean.items())))

    @property
    def d(self) -> int:
        return len(self.terms[0][0]) if self.terms else 0

    def as_dict(self) -> dict:
        return dict(self.terms)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        out = self.as_dict()
        for e, c in other.terms:
            out[e] = out.get(e, 0.0) + c
        return Polynomial.from_dict(out)

    def scale(self, a: float) -> "Polynomial":
        return Polynomial.from_dict({e: a * c for e, c in self.terms})

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(len(x))
        for e, c in self.terms:
            out += c * np.prod(x ** np.asarray(e), axis=1)
        return out

    def derivative(self, j: int, times: int = 1) -> "Polynomial":
        out = {}
        for e, c in self.terms:
            if e[j] < times:
                continue
            f = math.perm(e[j], times)
            ne = list(e)
            ne[j] -= times
            out[tuple(ne)] = out.get(tuple(ne), 0.0) + c * f
        return Polynomial.from_dict(out)

    def laplacian(self) -> "Polynomial":
        out = Polynomial(())
        for j in range(self.d):
            out = out + self.derivative(j, 2)
        return out


@lru_cache(maxsize=256)
def _radial_integral(kernel_key, power: int) -> float:
    profile, d = kernel_key
    val, _ = integrate.quad(lambda t: float(profile(np.array([t]))[0]) * t ** (power + d - 1),
                            0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def ball_moment(kernel: NonlocalKernelSpec, gam) -> float:
    """Integral of rho_delta(|s|) s^gamma over B_delta(0)."""
    gam = tuple(int(g) for g in gam)
    if any(g % 2 for g in gam):
        return 0.0
    d = kernel.d
    a = [(g + 1) / 2 for g in gam]
    ang = 2.0 * np.prod([gamma(v) for v in a]) / gamma(sum(gam) / 2 + d / 2)
    rad = _radial_integral((kernel.profile, d), sum(gam))
    return kernel.norm_const * kernel.delta ** (sum(gam) - 2) * ang * rad


def nonlocal_apply(poly: Polynomial, kernel: NonlocalKernelSpec) -> Polynomial:
    """L_delta applied exactly to a polynomial: sum over even gamma of binom * moment."""
    out = {}
    for e, c in poly.terms:
        ranges = [range(0, ej + 1, 2) for ej in e]
        for gam in np.ndindex(*[len(r) for r in ranges]):
            g = tuple(ranges[j][i] for j, i in enumerate(gam))
            if sum(g) == 0:
                continue
            coef = c * np.prod([math.comb(e[j], g[j]) for j in range(len(e))])
            ne = tuple(e[j] - g[j] for j in range(len(e)))
            out[ne] = out.get(ne, 0.0) + coef * ball_moment(kernel, g)
    return Polynomial.from_dict(out)


@dataclass(frozen=True)
class ManufacturedSolution:
    """Exact solution u with local source f0 = -Laplace(u) and nonlocal source f_delta = -L_delta u."""

    name: str
    u: Polynomial

    @property
    def f0(self) -> Polynomial:
        return self.u.laplacian().scale(-1.0)

    def f_delta(self, kernel: NonlocalKernelSpec) -> Polynomial:
        return nonlocal_apply(self.u, kernel).scale(-1.0)


def _ms1() -> Polynomial:
    # x1^2 (1 - x1^2) + x2^2 (1 - x2^2)
    return Polynomial.from_dict({(2, 0): 1.0, (4, 0): -1.0, (0, 2): 1.0, (0, 4): -1.0})


def _ms2() -> Polynomial:
    # x1^2 x2^2 (1 - x1^2)(1 - x2^2)
    return Polynomial.from_dict({(2, 2): 1.0, (4, 2): -1.0, (2, 4): -1.0, (4, 4): 1.0})


MANUFACTURED = {"ms1": _ms1, "ms2": _ms2}


def manufactured(name: str) -> ManufacturedSolution:
    try:
        return ManufacturedSolution(name, MANUFACTURED[name]())
    except KeyError:
        raise ValueError(f"unknown manufactured solution {name!r}") from None
