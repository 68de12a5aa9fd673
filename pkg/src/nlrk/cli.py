"""Command-line entry point ``nlrk``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .grid import DomainSpec, build_grid
from .harness import StudyError, load_config, run_study, solve_grid
from .kernels import make_kernel
from .operators import MeshfreeRule
from .quadrature import build_symmetric_set, gmls_weights, rk_weights, verify_reproduction
from .symbols import lambda_delta, scan_comparison, xi_grid

SYMBOL_DEFAULTS = {"delta": 0.125, "h": [0.125, 0.0625], "eps_ratio": 3.0, "n_xi": 51,
                   "R": 20, "kernel": "constant"}


def _cmd_solve(args) -> int:
    cfg = load_config(args.config)
    h = args.h if args.h is not None else cfg.grid_seq[0]
    row, system, _ = solve_grid(cfg, h)
    out = {"h_max": row.h_max, "delta": row.delta, "n_unknowns": row.n_unknowns,
           "nnz": int(system.matrix.nnz), "relative_residual": row.residual,
           "error_l2": row.error_l2, "runtime_s": round(row.runtime, 3)}
    if args.export:
        from .operators import export_triplets
        export_triplets(system, args.export)
        out["matrix_file"] = str(args.export)
    print(json.dumps(out, indent=2))
    return 0


def _cmd_converge(args) -> int:
    cfg = load_config(args.config)
    try:
        rep = run_study(cfg, out_dir=args.out, log=lambda m: print(m, file=sys.stderr))
    except StudyError as exc:
        print(f"error: {exc} (partial results in {args.out})", file=sys.stderr)
        return 1
    print(json.dumps({"fitted_rate": rep.fitted_rate, "pair_rates": rep.fit.pair_rates,
                      "out": str(args.out)}, indent=2))
    return 0


def _cmd_weights(args) -> int:
    pset = build_symmetric_set(args.delta, args.eps, d=args.d)
    kernel = make_kernel(args.kernel, args.delta, args.d)
    w = gmls_weights(pset, kernel) if args.gmls else rk_weights(pset, kernel)
    rep = verify_reproduction(pset, w, kernel)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow([f"s{j + 1}" for j in range(args.d)] + ["abs_s", "omega"])
    s = args.delta * pset.points
    om = w.scaled(args.delta, args.d)
    for p, o in zip(s, om):
        writer.writerow([repr(float(v)) for v in p] + [repr(float(np.linalg.norm(p))), repr(float(o))])
    summary = {"count": pset.count, "method": w.method, "denominator": w.denom,
               "max_reproduction_violation": rep.max_violation,
               "min_weight": float(w.weights.min())}
    print(json.dumps(summary), file=sys.stderr)
    return 0


def _cmd_symbols(args) -> int:
    conf = dict(SYMBOL_DEFAULTS)
    if args.config:
        with open(args.config) as fh:
            user = json.load(fh)
        unknown = set(user) - set(SYMBOL_DEFAULTS)
        if unknown:
            raise ValueError(f"unknown symbol configuration keys: {sorted(unknown)}")
        conf.update(user)
    delta = float(conf["delta"])
    kernel = make_kernel(conf["kernel"], delta, 2)
    grid = build_grid(DomainSpec.unit_box(2, delta), tuple(conf["h"]))
    pset = build_symmetric_set(delta, delta / float(conf["eps_ratio"]))
    rule = MeshfreeRule(pset, rk_weights(pset, kernel))
    xi = xi_grid(int(conf["n_xi"]))
    scan = scan_comparison(kernel, grid, rule, xi, int(conf["R"]))
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    fh = open(out / "symbols.csv", "w") if out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["xi1", "xi2", "lambda_G", "lambda_C", "lambda_C_eps", "C_over_G", "Ceps_over_C"])
        for n, x in enumerate(xi):
            w.writerow([repr(float(x[0])), repr(float(x[1]))]
                       + [repr(float(scan.values[k][n])) for k in ("G", "C", "C_eps")]
                       + [repr(float(scan.ratio_c_g[n])), repr(float(scan.ratio_eps_c[n]))])
    finally:
        if out:
            fh.close()
    summary = scan.minima()
    small = xi[kernel.delta * np.linalg.norm(xi, axis=1) <= 0.3]
    if len(small):
        lam = lambda_delta(kernel, small)
        summary["max_small_freq_rel_dev"] = float(np.max(np.abs(lam / np.sum(small**2, 1) - 1)))
    summary["config"] = conf
    text = json.dumps(summary, indent=2)
    if out:
        (out / "symbols_summary.json").write_text(text + "\n")
    print(text, file=sys.stderr if not out else sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlrk", description=__doc__)
    p.add_argument("--version", action="version", version=f"nlrk {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="assemble and solve one grid of a study configuration")
    s.add_argument("--config", required=True)
    s.add_argument("--h", type=float, default=None, help="h_max (default: first grid)")
    s.add_argument("--export", default=None, help="write the matrix as row/col/value triplets")
    s.set_defaults(func=_cmd_solve)

    c = sub.add_parser("converge", help="run a convergence study and write CSV/JSON reports")
    c.add_argument("--config", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=_cmd_converge)

    w = sub.add_parser("weights", help="print meshfree quadrature weights as CSV")
    w.add_argument("--delta", type=float, required=True)
    w.add_argument("--eps", type=float, required=True)
    w.add_argument("--gmls", action="store_true", help="GMLS weights instead of the RK closed form")
    w.add_argument("--d", type=int, default=2)
    w.add_argument("--kernel", default="constant")
    w.set_defaults(func=_cmd_weights)

    y = sub.add_parser("symbols", help="scan Fourier-symbol ratios on a frequency grid")
    y.add_argument("--config", default=None)
    y.add_argument("--out", default=None)
    y.set_defaults(func=_cmd_symbols)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
