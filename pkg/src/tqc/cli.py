"""Command-line front end: ``tqc solve``, ``tqc check`` and ``tqc make-testcase``.

Exit status is 0 when a solve converged (or a check passed), 2 when a solve
stopped on ``max_iter`` or ``stalled`` (outputs are still written), and 1 on
any hard error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import beltrami as bt
from .diagnostics import DEFAULT_BINS, compute_diagnostics, write_report
from .energy import energy_gap, lower_bound_check
from .generators import TESTCASES, make_testcase, write_testcase
from .iteration import SolverParams, run, write_trace
from .mesh import load_constraints, load_mesh, read_mesh_arrays, save_off

log = logging.getLogger("tqc")

EXIT_OK, EXIT_ERROR, EXIT_BEST_EFFORT = 0, 1, 2
CONSTRAINT_RTOL = 1e-12


class CliError(Exception):
    pass


def _params(args) -> SolverParams:
    defaults = SolverParams()
    kw = {}
    for name in ("variant", "alpha", "smooth_lambda", "smooth_passes", "max_iter", "tol_mu", "tol_gap", "mu_cap"):
        value = getattr(args, name)
        kw[name] = getattr(defaults, name) if value is None else value
    return SolverParams(**kw)


def _default_path(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def cmd_solve(args) -> int:
    params = _params(args)
    out = Path(args.out)
    trace_path = Path(args.trace) if args.trace else _default_path(out, "_trace.csv")
    diag_path = Path(args.diag) if args.diag else _default_path(out, "_diag")
    paths = [Path(args.mesh), Path(args.constraints), out, trace_path, diag_path]
    if len({p.resolve() for p in paths}) != len(paths):
        raise CliError("input and output paths must be distinct")

    mesh = load_mesh(args.mesh)
    cons = load_constraints(args.constraints, mesh, full_boundary=True)
    result = run(mesh, cons, params)

    save_off(out, result.map, mesh.faces)
    write_trace(trace_path, result.trace)
    diag = compute_diagnostics(mesh, result.map, result.mu, args.bins)
    own = bt.dilation_stats(bt.beltrami_of_map(mesh, result.map), mesh)
    extra = {
        "reason": result.trace.reason,
        "iterations": result.trace.records[-1].iter,
        "energy_gap": result.report.energy_gap,
        "harmonic_energy": result.report.harmonic_energy,
        "target_area": result.report.target_area,
        "k": result.report.k_modulus,
        "map_mu_mean": own.mean_modulus,
        "map_mu_std": own.modulus_std,
        "map_K": own.K,
        "warnings": result.trace.warnings,
    }
    write_report(diag, diag_path, extra)
    bt.write_field_csv(diag_path / "mu.csv", result.mu)

    last = result.trace.records[-1]
    print(
        f"{result.trace.reason}: {last.iter} iterations, gap {last.energy_gap:.6e} "
        f"(initial {result.trace.records[0].energy_gap:.6e}), k {last.k:.6f}, folds {diag.fold_count}"
    )
    for w in result.trace.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK if result.converged else EXIT_BEST_EFFORT


def cmd_check(args) -> int:
    mesh = load_mesh(args.mesh)
    cons = load_constraints(args.constraints, mesh, full_boundary=True)
    f, faces = read_mesh_arrays(args.map)
    if f.size != mesh.n_vertices or faces.shape != mesh.faces.shape or not np.array_equal(faces, mesh.faces):
        raise CliError(f"{args.map}: connectivity does not match {args.mesh}")

    err = np.abs(f[cons.index] - cons.target)
    satisfied = bool(np.all(err <= CONSTRAINT_RTOL * (1.0 + np.abs(cons.target))))
    if args.mu:
        mu = bt.read_field_csv(args.mu)
        if mu.size != mesh.n_faces:
            raise CliError(f"{args.mu}: {mu.size} rows for {mesh.n_faces} faces")
    else:
        mu = bt.project_constant_modulus(mesh, bt.beltrami_of_map(mesh, f))
    report = energy_gap(mesh, f, mu, target_area=cons.target_area, strict=False)
    diag = compute_diagnostics(mesh, f, mu, args.bins)
    own = bt.dilation_stats(bt.beltrami_of_map(mesh, f), mesh)
    if args.diag:
        write_report(diag, args.diag, {"energy_gap": report.energy_gap, "constraints_satisfied": satisfied})

    ok = satisfied and lower_bound_check(report)
    print(f"constraints satisfied: {satisfied} (max error {err.max():.3e})")
    print(f"energy gap: {report.energy_gap!r}")
    print(f"k: {report.k_modulus:.6f}  map |mu| mean {own.mean_modulus:.6f} std {own.modulus_std:.3e}")
    print(f"folds: {diag.fold_count}  min jacobian {diag.min_jacobian:.3e}")
    print(f"arg-laplacian median |.|: {diag.arg_laplacian_median_abs:.3e}  hopf residual {diag.hopf_residual_norm:.3e}")
    return EXIT_OK if ok else EXIT_ERROR


def cmd_make_testcase(args) -> int:
    case = make_testcase(args.name, args.size)
    mesh_path, cons_path = write_testcase(case, args.dir)
    print(f"{mesh_path} ({case.mesh.n_faces} faces)")
    print(f"{cons_path} ({len(case.constraints)} constraints, {case.constraints.landmark_index.size} landmarks)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tqc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug output")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run the quasi-conformal iteration")
    s.add_argument("--mesh", required=True)
    s.add_argument("--constraints", required=True)
    s.add_argument("--out", required=True, help="mapped mesh (OFF)")
    s.add_argument("--trace", help="trace CSV (default: <out>_trace.csv)")
    s.add_argument("--diag", help="diagnostics directory (default: <out>_diag)")
    s.add_argument("--variant", choices=["full", "simplified"])
    s.add_argument("--alpha", type=float)
    s.add_argument("--smooth-lambda", type=float)
    s.add_argument("--smooth-passes", type=int)
    s.add_argument("--max-iter", type=int)
    s.add_argument("--tol-mu", type=float)
    s.add_argument("--tol-gap", type=float)
    s.add_argument("--mu-cap", type=float)
    s.add_argument("--bins", type=int, default=DEFAULT_BINS)
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("check", help="re-verify a solved map")
    c.add_argument("--mesh", required=True)
    c.add_argument("--constraints", required=True)
    c.add_argument("--map", required=True, help="mapped mesh written by solve")
    c.add_argument("--mu", help="Beltrami field CSV (default: projected coefficient of the map)")
    c.add_argument("--diag", help="write diagnostics into this directory")
    c.add_argument("--bins", type=int, default=DEFAULT_BINS)
    c.set_defaults(func=cmd_check)

    m = sub.add_parser("make-testcase", help="write a bundled mesh and constraint file")
    m.add_argument("name", help=", ".join(TESTCASES))
    m.add_argument("size", type=int, help="approximate face count")
    m.add_argument("--dir", default=".", help="output directory")
    m.set_defaults(func=cmd_make_testcase)
    return p


def _thread_limit():
    value = os.environ.get("TQC_THREADS")
    if not value:
        return nullcontext()
    try:
        n = int(value)
    except ValueError:
        raise CliError(f"TQC_THREADS must be an integer, got {value!r}") from None
    if n < 1:
        raise CliError("TQC_THREADS must be positive")
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        with _thread_limit():
            return args.func(args)
    except (CliError, OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"tqc: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
