"""Quasi-conformal iteration for extremal Teichmueller maps.

Each step solves the LBS for the current constant-modulus field, reads off the
Beltrami coefficient of the new map, then smooths and projects it back onto
constant-modulus fields.  The energy gap of the current field is tracked so a
step that raises it can be retried or rejected.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import beltrami as bt
from .energy import EnergyReport, energy_gap
from .lbs import assemble, solve
from .mesh import ConstraintSet, TriangleMesh, jacobians

log = logging.getLogger(__name__)

VARIANTS = ("simplified", "full")
ORDERS = ("project_last", "smooth_last")
TRACE_HEADER = ["iter", "energy_gap", "k", "mu_std", "step_inf", "min_jacobian"]
FOLD_LIMIT = 0.10
# gap at or below this fraction of the target area counts as exact zero
ABS_GAP_FLOOR = 1e-14
GUARD_REL = 1e-9


class FoldError(RuntimeError):
    """More than ``FOLD_LIMIT`` of the faces are folded."""


@dataclass(frozen=True)
class SolverParams:
    variant: str = "simplified"
    alpha: float = 1.0
    smooth_lambda: float = 0.5
    smooth_passes: int = 1
    max_iter: int = 500
    tol_mu: float = 1e-6
    tol_gap: float = 1e-8
    mu_cap: float = bt.MU_CAP
    monotone_guard: bool = True
    order: str = "project_last"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 < self.smooth_lambda <= 1:
            raise ValueError("smooth_lambda must lie in (0, 1]")
        if self.smooth_passes < 1 or self.max_iter < 1:
            raise ValueError("smooth_passes and max_iter must be positive")
        if self.tol_mu <= 0 or self.tol_gap <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.mu_cap < 1:
            raise ValueError("mu_cap must lie in (0, 1)")


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    energy_gap: float
    k: float
    mu_std: float
    step_inf: float
    min_jacobian: float
    folded: int = 0


@dataclass
class IterationTrace:
    records: list[TraceRecord] = field(default_factory=list)
    reason: str = ""
    warnings: list[str] = field(default_factory=list)
    rejected: list[TraceRecord] = field(default_factory=list)

    def append(self, rec: TraceRecord) -> None:
        if self.records and rec.iter <= self.records[-1].iter:
            raise ValueError("trace records must be strictly ordered")
        self.records.append(rec)

    @property
    def gaps(self) -> np.ndarray:
        return np.array([r.energy_gap for r in self.records])

    def __len__(self):
        return len(self.records)


@dataclass
class SolveResult:
    map: np.ndarray
    mu: np.ndarray
    trace: IterationTrace
    report: EnergyReport

    @property
    def converged(self) -> bool:
        return self.trace.reason == "converged"


def _modulus_std(mesh: TriangleMesh, mu: np.ndarray) -> float:
    m = np.abs(mu)
    k = np.dot(mesh.face_areas, m) / mesh.area
    return float(np.sqrt(np.dot(mesh.face_areas, (m - k) ** 2) / mesh.area))


def _gap(mesh, f, mu, constraints, params) -> EnergyReport:
    strict = params.order == "project_last"
    return energy_gap(mesh, f, mu, target_area=constraints.target_area, strict=strict)


def initialize(mesh: TriangleMesh, constraints: ConstraintSet):
    """Start from ``mu = 0``; the first map is the harmonic extension of the constraints."""
    mu0 = np.zeros(mesh.n_faces, dtype=complex)
    return solve(assemble(mesh, mu0, constraints)), mu0


def update_field(mesh: TriangleMesh, f_next, mu, params: SolverParams, passes: int | None = None, alpha=None):
    """New Beltrami field from the freshly solved map ``f_next``."""
    passes = params.smooth_passes if passes is None else passes
    alpha = params.alpha if alpha is None else alpha
    if params.variant == "simplified":
        raw = bt.beltrami_of_map(mesh, f_next)
    else:
        raw = mu + alpha * bt.relative_beltrami(mesh, f_next, mu)

    def smooth(x):
        return bt.laplacian_smooth(mesh, x, params.smooth_lambda, passes)

    if params.order == "project_last":
        new = bt.project_constant_modulus(mesh, smooth(raw))
    else:
        new = smooth(bt.project_constant_modulus(mesh, raw))
    return bt.clamp_modulus(new, params.mu_cap)


def _check_folds(mesh, f, trace: IterationTrace | None, it: int):
    jac = jacobians(mesh, f)
    folded = int(np.count_nonzero(jac <= 0))
    if folded > FOLD_LIMIT * mesh.n_faces:
        raise FoldError(f"iteration {it}: {folded} of {mesh.n_faces} faces folded")
    if folded and trace is not None:
        trace.warnings.append(f"iteration {it}: {folded} folded face(s)")
    return float(jac.min()), folded


def qc_step(mesh: TriangleMesh, constraints: ConstraintSet, params: SolverParams, state):
    """One iteration ``(f_n, mu_n) -> (f_{n+1}, mu_{n+1})``.

    ``f_{n+1}`` is the LBS solution for ``mu_n`` and ``mu_{n+1}`` is derived
    from it.  Raises :class:`FoldError` if too many faces of ``f_{n+1}`` fold.
    """
    _, mu = state
    f_next = solve(assemble(mesh, mu, constraints))
    _check_folds(mesh, f_next, None, -1)
    return f_next, update_field(mesh, f_next, mu, params)


def _record(mesh, it, report, mu, step, f):
    jac = jacobians(mesh, f)
    return TraceRecord(
        iter=it,
        energy_gap=report.energy_gap,
        k=report.k_modulus,
        mu_std=_modulus_std(mesh, mu),
        step_inf=step,
        min_jacobian=float(jac.min()),
        folded=int(np.count_nonzero(jac <= 0)),
    )


def run(mesh: TriangleMesh, constraints: ConstraintSet, params: SolverParams | None = None) -> SolveResult:
    """Iterate until the field stops moving, the gap vanishes, or ``max_iter``.

    The returned map is always ``LBS(mu)`` for the returned field, and the
    last trace row describes exactly that pair.
    """
    params = params or SolverParams()
    trace = IterationTrace()

    mu = np.zeros(mesh.n_faces, dtype=complex)
    f = solve(assemble(mesh, mu, constraints))
    _check_folds(mesh, f, trace, 0)
    report = _gap(mesh, f, mu, constraints, params)
    gap0 = report.energy_gap
    trace.append(_record(mesh, 0, report, mu, float("nan"), f))
    floor = ABS_GAP_FLOOR * constraints.target_area
    # allowed increase per accepted step: the tighter of the energy floor and 1e-9 of the initial gap
    slack = min(report.gap_eps, GUARD_REL * max(gap0, floor))

    if gap0 <= floor:
        trace.reason = "converged"
        return SolveResult(f, mu, trace, report)

    for it in range(1, params.max_iter + 1):
        attempt = 0
        while True:
            passes = params.smooth_passes + attempt if params.variant == "simplified" else None
            alpha = params.alpha / 2**attempt if params.variant == "full" else None
            mu_new = update_field(mesh, f, mu, params, passes=passes, alpha=alpha)
            f_new = solve(assemble(mesh, mu_new, constraints))
            rep_new = _gap(mesh, f_new, mu_new, constraints, params)
            if not params.monotone_guard or rep_new.energy_gap <= report.energy_gap + slack or attempt >= 1:
                break
            trace.rejected.append(_record(mesh, it, rep_new, mu_new, float(np.abs(mu_new - mu).max()), f_new))
            log.debug("iteration %d: gap rose to %.6e, retrying", it, rep_new.energy_gap)
            attempt += 1

        if params.monotone_guard and rep_new.energy_gap > report.energy_gap + slack:
            trace.rejected.append(_record(mesh, it, rep_new, mu_new, float(np.abs(mu_new - mu).max()), f_new))
            trace.reason = "stalled"
            break

        _check_folds(mesh, f_new, trace, it)
        step = float(np.abs(mu_new - mu).max())
        mu, f, report = mu_new, f_new, rep_new
        trace.append(_record(mesh, it, report, mu, step, f))
        log.info("iter %d gap %.6e k %.6f step %.3e", it, report.energy_gap, report.k_modulus, step)
        if step <= params.tol_mu or report.energy_gap <= params.tol_gap * gap0 or report.energy_gap <= floor:
            trace.reason = "converged"
            break
    else:
        trace.reason = "max_iter"

    return SolveResult(f, mu, trace, report)


def write_trace(path, trace: IterationTrace) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in trace.records:
            w.writerow([r.iter, repr(r.energy_gap), repr(r.k), repr(r.mu_std), repr(r.step_inf), repr(r.min_jacobian)])


def read_trace(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "iter" else float(v)) for k, v in row.items()} for row in rows]
