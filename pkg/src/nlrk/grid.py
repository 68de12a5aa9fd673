"""Cartesian grids, node enumeration and node classification."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MAX_ANISOTROPY",
    "DomainSpec",
    "GridSpec",
    "NodePartition",
    "build_grid",
    "classify_nodes",
    "restrict",
]

MAX_ANISOTROPY = 16.0
_TOL = 1e-12


@dataclass(frozen=True)
class DomainSpec:
    """Open box Omega = (box_lo, box_hi) with horizon ``delta``."""

    box_lo: tuple
    box_hi: tuple
    delta: float

    def __post_init__(self):
        lo = np.asarray(self.box_lo, dtype=float)
        hi = np.asarray(self.box_hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box_lo and box_hi must be vectors of equal length")
        if np.any(lo >= hi):
            raise ValueError("box_lo must be below box_hi componentwise")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        object.__setattr__(self, "box_lo", tuple(float(v) for v in lo))
        object.__setattr__(self, "box_hi", tuple(float(v) for v in hi))

    @classmethod
    def unit_box(cls, d: int, delta: float) -> "DomainSpec":
        return cls((0.0,) * d, (1.0,) * d, delta)

    @property
    def d(self) -> int:
        return len(self.box_lo)

    def distance(self, x) -> np.ndarray:
        """Euclidean distance from points ``x`` (n, d) to the closed box."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo, hi = np.asarray(self.box_lo), np.asarray(self.box_hi)
        gap = np.maximum(np.maximum(lo - x, x - hi), 0.0)
        return np.sqrt(np.sum(gap**2, axis=1))

    def contains(self, x) -> np.ndarray:
        """Strict membership in the open box, with a relative tolerance."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo, hi = np.asarray(self.box_lo), np.asarray(self.box_hi)
        tol = _TOL * np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
        return np.all((x > lo + tol) & (x < hi - tol), axis=1)

    def in_interaction_layer(self, x) -> np.ndarray:
        """Membership in Omega_I = {x outside Omega, dist(x, Omega) <= delta}."""
        return ~self.contains(x) & (self.distance(x) <= self.delta * (1 + _TOL))


@dataclass(frozen=True)
class GridSpec:
    """Rectilinear grid x_k = k * h over an index box.

    Attributes
    ----------
    h : tuple of float
        Spacing per dimension.
    index_lo, index_hi : tuple of int
        Inclusive index range per dimension.
    """

    h: tuple
    index_lo: tuple
    index_hi: tuple

    @property
    def d(self) -> int:
        return len(self.h)

    @property
    def h_max(self) -> float:
        return max(self.h)

    @property
    def h_min(self) -> float:
        return min(self.h)

    @property
    def hat_h(self) -> tuple:
        return tuple(hj / self.h_max for hj in self.h)

    @property
    def shape(self) -> tuple:
        return tuple(b - a + 1 for a, b in zip(self.index_lo, self.index_hi))

    def axis_indices(self, j: int) -> np.ndarray:
        return np.arange(self.index_lo[j], self.index_hi[j] + 1)

    def all_indices(self) -> np.ndarray:
        """All node multi-indices, lexicographic with the first index slowest."""
        axes = [self.axis_indices(j) for j in range(self.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def coords(self, k) -> np.ndarray:
        return np.asarray(k, dtype=float) * np.asarray(self.h)

    def flat_index(self, k) -> np.ndarray:
        """Position of multi-indices ``k`` (n, d) in :meth:`all_indices`."""
        k = np.atleast_2d(k) - np.asarray(self.index_lo)
        return np.ravel_multi_index(tuple(k.T), self.shape)

    def to_json(self) -> str:
        return json.dumps({"h": list(self.h), "index_lo": list(self.index_lo),
                           "index_hi": list(self.index_hi)})


@dataclass(frozen=True)
class NodePartition:
    """Unknown and constrained node multi-indices, each in lexicographic order."""

    unknown: np.ndarray
    constrained: np.ndarray
    notes: tuple = field(default=())

    @property
    def n_unknown(self) -> int:
        return len(self.unknown)


def build_grid(domain: DomainSpec, h) -> GridSpec:
    """Grid whose index box covers Omega enlarged by delta + 2 h_max.

    Raises
    ------
    ValueError
        For non-positive spacing, dimension mismatch or anisotropy above 16.
    """
    h = tuple(float(v) for v in np.atleast_1d(h))
    if len(h) != domain.d:
        raise ValueError("spacing vector length must equal the domain dimension")
    if any(not hj > 0 for hj in h):
        raise ValueError("grid spacings must be positive")
    if max(h) / min(h) > MAX_ANISOTROPY:
        raise ValueError(f"anisotropy ratio {max(h) / min(h):g} exceeds {MAX_ANISOTROPY:g}")
    pad = domain.delta + 2.0 * max(h)
    lo, hi = [], []
    for j, hj in enumerate(h):
        a = (domain.box_lo[j] - pad) / hj
        b = (domain.box_hi[j] + pad) / hj
        # nodes within the padded box, robust to round-off at the edge
        lo.append(int(math.ceil(a - _TOL * max(1.0, abs(a)))))
        hi.append(int(math.floor(b + _TOL * max(1.0, abs(b)))))
    return GridSpec(h, tuple(lo), tuple(hi))


def classify_nodes(grid: GridSpec, domain: DomainSpec) -> NodePartition:
    """Split nodes into unknowns (strictly inside Omega) and constrained nodes.

    Constrained nodes lie outside Omega within distance delta + 2 h_max.
    """
    k = grid.all_indices()
    x = grid.coords(k)
    inside = domain.contains(x)
    reach = domain.delta + 2.0 * grid.h_max
    near = domain.distance(x) <= reach * (1 + _TOL)
    notes = () if inside.any() else ("empty unknown set",)
    return NodePartition(k[inside], k[~inside & near], notes)


def restrict(f, grid: GridSpec, nodes) -> np.ndarray:
    """Values of ``f`` at the nodes ``x_k = k * h`` (r^h), in the given order.

    ``f`` takes an (n, d) array of points and returns n values.
    """
    x = grid.coords(nodes)
    return np.asarray(f(x), dtype=float).reshape(len(x))
