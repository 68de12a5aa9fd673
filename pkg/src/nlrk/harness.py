"""Manufactured-solution convergence studies: configuration, execution and reporting."""

from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .grid import DomainSpec, build_grid, classify_nodes
from .kernels import make_kernel
from .linsolve import error_l2, solve_direct, solve_krylov
from .manufactured import manufactured
from .operators import MeshfreeRule, assemble
from .quadrature import build_symmetric_set, gauss_ball, gmls_weights, rk_weights
from .rk_basis import RKBasis

__all__ = [
    "COUPLINGS",
    "StudyConfig",
    "ConvergenceRow",
    "ConvergenceReport",
    "StudyError",
    "RateFit",
    "parse_config",
    "load_config",
    "delta_for",
    "build_problem",
    "solve_grid",
    "run_study",
    "fit_rate",
    "emit",
    "CSV_COLUMNS",
]

COUPLINGS = ("fixed", "delta=h", "delta=h^2", "delta=sqrt(h)", "delta=M0*h")
CSV_COLUMNS = ("h_max", "delta", "n_unknowns", "error_l2", "pair_rate")
FINEST_DEFAULT = 1 / 64


@dataclass(frozen=True)
class StudyConfig:
    """One convergence study.

    Attributes
    ----------
    manufactured : {"ms1", "ms2"}
    coupling : one of :data:`COUPLINGS`
        ``"fixed"`` solves the nonlocal problem with source f_delta at
        ``delta0``; every other coupling sends delta to zero with the grid
        and solves with f0 against the local solution.
    backend : {"gauss", "meshfree"}
        Gauss ball rule with ``n_r`` x ``n_theta`` points, or quasi-discrete
        weights (``weights`` = "rk" or "gmls") on the lattice set with
        delta / eps = ``eps_ratio``.
    bc_mode : {"exact", "zero"}
        Constrained coefficients from the manufactured u, or zero.
    grid_seq : list of float
        Strictly decreasing h_max values, at least three.
    hat_h : list of float
        Spacing shape; h = h_max * hat_h. Default (1, 1/2).
    solver : {"direct", "krylov"}
    """

    manufactured: str = "ms1"
    coupling: str = "fixed"
    delta0: float = 0.125
    M0: float = 2.0
    backend: str = "gauss"
    n_r: int = 25
    n_theta: int = 40
    eps_ratio: float = 3.0
    weights: str = "rk"
    bc_mode: str = "exact"
    grid_seq: tuple = (1 / 8, 1 / 16, 1 / 32, 1 / 64)
    hat_h: tuple = (1.0, 0.5)
    solver: str = "direct"
    tol: float = 1e-12
    kernel: str = "constant"
    allow_fine: bool = False

    def __post_init__(self):
        object.__setattr__(self, "grid_seq", tuple(float(v) for v in self.grid_seq))
        object.__setattr__(self, "hat_h", tuple(float(v) for v in self.hat_h))
        if self.manufactured not in ("ms1", "ms2"):
            raise ValueError(f"unknown manufactured solution {self.manufactured!r}")
        if self.coupling not in COUPLINGS:
            raise ValueError(f"coupling must be one of {COUPLINGS}")
        if self.backend not in ("gauss", "meshfree"):
            raise ValueError("backend must be 'gauss' or 'meshfree'")
        if self.weights not in ("rk", "gmls"):
            raise ValueError("weights must be 'rk' or 'gmls'")
        if self.bc_mode not in ("exact", "zero"):
            raise ValueError("bc_mode must be 'exact' or 'zero'")
        if self.solver not in ("direct", "krylov"):
            raise ValueError("solver must be 'direct' or 'krylov'")
        seq = self.grid_seq
        if len(seq) < 3:
            raise ValueError("grid_seq needs at least three grids for a rate fit")
        if any(b >= a for a, b in zip(seq[:-1], seq[1:])) or seq[-1] <= 0:
            raise ValueError("grid_seq must be positive and strictly decreasing")
        if len(self.hat_h) != 2 or max(self.hat_h) != 1.0 or min(self.hat_h) <= 0:
            raise ValueError("hat_h must have two positive entries with maximum 1")
        if seq[-1] < FINEST_DEFAULT * (1 - 1e-12) and not self.allow_fine:
            raise ValueError("grids finer than h_max = 1/64 need allow_fine = true")
        if self.delta0 <= 0 or self.M0 <= 0 or self.eps_ratio < 1:
            raise ValueError("delta0 and M0 must be positive and eps_ratio at least 1")

    @property
    def nonlocal_target(self) -> bool:
        """True when the error is measured against the nonlocal solution."""
        return self.coupling == "fixed"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["grid_seq"] = list(self.grid_seq)
        out["hat_h"] = list(self.hat_h)
        return out


def parse_config(data: dict) -> StudyConfig:
    """Build a :class:`StudyConfig` from a JSON-style mapping, rejecting unknown keys."""
    known = set(StudyConfig.__dataclass_fields__)
    extra = set(data) - known
    if extra:
        raise ValueError(f"unknown configuration keys: {sorted(extra)}")
    return StudyConfig(**data)


def load_config(path) -> StudyConfig:
    with open(path) as fh:
        return parse_config(json.load(fh))


def delta_for(config: StudyConfig, h_max: float) -> float:
    c = config.coupling
    if c == "fixed":
        return config.delta0
    if c == "delta=h":
        return h_max
    if c == "delta=h^2":
        return h_max**2
    if c == "delta=sqrt(h)":
        return math.sqrt(h_max)
    return config.M0 * h_max


@dataclass
class ConvergenceRow:
    h_max: float
    delta: float
    n_unknowns: int
    error_l2: float
    runtime: float
    residual: float = 0.0


@dataclass
class RateFit:
    slope: float
    pair_rates: list


@dataclass
class ConvergenceReport:
    config: StudyConfig
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def fit(self) -> RateFit | None:
        return fit_rate(self.rows) if len(self.rows) >= 2 else None

    @property
    def fitted_rate(self) -> float:
        f = self.fit
        return float("nan") if f is None else f.slope


class StudyError(RuntimeError):
    """A grid of a study failed; ``report`` holds the rows completed before it."""

    def __init__(self, msg: str, report: ConvergenceReport):
        super().__init__(msg)
        self.report = report


def fit_rate(rows, errors=None) -> RateFit:
    """Least-squares slope of log(error) against log(h_max), plus per-pair rates.

    Accepts a list of :class:`ConvergenceRow` or two arrays ``(h, errors)``.
    Nonpositive errors are dropped with a warning.

    Raises
    ------
    ValueError
        With fewer than two usable rows.
    """
    if errors is None:
        h = np.array([r.h_max for r in rows], dtype=float)
        e = np.array([r.error_l2 for r in rows], dtype=float)
    else:
        h, e = np.asarray(rows, dtype=float), np.asarray(errors, dtype=float)
    ok = np.isfinite(e) & (e > 0)
    if not ok.all():
        warnings.warn(f"excluding {int((~ok).sum())} nonpositive errors from the rate fit",
                      RuntimeWarning)
    h, e = h[ok], e[ok]
    if len(h) < 2:
        raise ValueError("rate fit needs at least two rows with positive errors")
    lh, le = np.log(h), np.log(e)
    slope = float(np.polyfit(lh, le, 1)[0])
    pairs = [float((le[i] - le[i + 1]) / (lh[i] - lh[i + 1])) for i in range(len(h) - 1)]
    return RateFit(slope, pairs)


def build_problem(config: StudyConfig, h_max: float):
    """Grid, partition, kernel, backend and source/exact callables for one grid."""
    delta = delta_for(config, h_max)
    domain = DomainSpec.unit_box(2, delta)
    grid = build_grid(domain, tuple(h_max * v for v in config.hat_h))
    part = classify_nodes(grid, domain)
    kernel = make_kernel(config.kernel, delta, 2)
    if config.backend == "gauss":
        backend = gauss_ball(delta, config.n_r, config.n_theta)
    else:
        pset = build_symmetric_set(delta, delta / config.eps_ratio)
        w = rk_weights(pset, kernel) if config.weights == "rk" else gmls_weights(pset, kernel)
        backend = MeshfreeRule(pset, w)
    ms = manufactured(config.manufactured)
    # fixed horizon: nonlocal problem with source f_delta; coupled: f0 and local target
    source = ms.f_delta(kernel) if config.nonlocal_target else ms.f0
    if config.bc_mode == "exact":
        g = ms.u
    else:
        def g(x):
            return np.zeros(len(np.atleast_2d(x)))
    return domain, grid, part, kernel, backend, source, g, ms.u


def solve_grid(config: StudyConfig, h_max: float):
    """Assemble and solve one grid; returns (row, system, coefficient array)."""
    t0 = time.perf_counter()
    domain, grid, part, kernel, backend, source, g, u = build_problem(config, h_max)
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="horizon below h/10")
        system = assemble(grid, part, kernel, backend, source, g)
    if config.solver == "direct":
        rep = solve_direct(system)
    else:
        rep = solve_krylov(system, tol=config.tol)
    coeffs = system.full_coefficients(rep.coefficients)
    err = error_l2(RKBasis(grid), coeffs, u, domain)
    row = ConvergenceRow(h_max, kernel.delta, system.n_unknown, err,
                         time.perf_counter() - t0, rep.residual_norm)
    return row, system, coeffs


def run_study(config: StudyConfig, out_dir=None, log=None) -> ConvergenceReport:
    """Run every grid of the study in order.

    If a grid fails, the rows finished so far are written to ``out_dir``
    (when given) and :class:`StudyError` is raised carrying them.
    """
    report = ConvergenceReport(config, metadata={
        "tool_version": __version__,
        "delta0": config.delta0,
        "M0": config.M0,
        "eps_ratio": config.eps_ratio,
        "target": "nonlocal" if config.nonlocal_target else "local",
        "source": "f_delta" if config.nonlocal_target else "f0",
    })
    for h_max in config.grid_seq:
        try:
            row, _, _ = solve_grid(config, h_max)
        except Exception as exc:
            if out_dir is not None:
                emit(report, out_dir)
            raise StudyError(f"grid h_max={h_max:g} failed: {exc}", report) from exc
        report.rows.append(row)
        if log is not None:
            log(f"h_max={h_max:.6g} delta={row.delta:.6g} N={row.n_unknowns} "
                f"error={row.error_l2:.6e} ({row.runtime:.1f}s)")
    if out_dir is not None:
        emit(report, out_dir)
    return report


def _csv_text(report: ConvergenceReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    pairs = report.fit.pair_rates if len(report.rows) >= 2 else []
    for i, r in enumerate(report.rows):
        rate = "" if i == 0 or i - 1 >= len(pairs) else repr(pairs[i - 1])
        w.writerow([repr(r.h_max), repr(r.delta), r.n_unknowns, repr(r.error_l2), rate])
    return buf.getvalue()


def _json_doc(report: ConvergenceReport) -> dict:
    fit = report.fit
    return {
        "config": report.config.to_dict(),
        "fitted_rate": None if fit is None else fit.slope,
        "pair_rates": [] if fit is None else fit.pair_rates,
        "rows": [asdict(r) for r in report.rows],
        "metadata": report.metadata,
        "tool_version": __version__,
    }


def emit(report: ConvergenceReport, out_dir, formats=("csv", "json"), stem: str = "study") -> list:
    """Write ``<stem>.csv``, ``<stem>.json`` and the log-log companion ``<stem>_loglog.dat``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    if "csv" in formats:
        p = out / f"{stem}.csv"
        p.write_text(_csv_text(report))
        written.append(p)
        loglog = out / f"{stem}_loglog.dat"
        lines = ["# log_h log_error"]
        lines += [f"{math.log(r.h_max)!r} {math.log(r.error_l2)!r}"
                  for r in report.rows if r.error_l2 > 0]
        loglog.write_text("\n".join(lines) + "\n")
        written.append(loglog)
    if "json" in formats:
        p = out / f"{stem}.json"
        p.write_text(json.dumps(_json_doc(report), indent=2) + "\n")
        written.append(p)
    return written
