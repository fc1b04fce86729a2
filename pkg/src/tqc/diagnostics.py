"""Post-hoc checks on a solved map: modulus histogram, harmonicity of arg(mu),
Hopf-differential residual and fold statistics."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .beltrami import DIR_EPS
from .mesh import TriangleMesh, jacobians, wirtinger_derivatives

DEFAULT_BINS = 50


class Histogram(NamedTuple):
    edges: np.ndarray
    mass: np.ndarray


class ArgLaplacian(NamedTuple):
    values: np.ndarray  # NaN where not evaluated
    median_abs: float
    excluded: int


@dataclass
class DiagnosticsReport:
    modulus_histogram: Histogram
    arg_laplacian: np.ndarray
    arg_laplacian_median_abs: float
    hopf_residual_norm: float
    min_jacobian: float
    fold_count: int
    arg_laplacian_excluded: int = 0

    def scalars(self) -> dict:
        return {
            "arg_laplacian_median_abs": self.arg_laplacian_median_abs,
            "arg_laplacian_excluded": self.arg_laplacian_excluded,
            "hopf_residual_norm": self.hopf_residual_norm,
            "min_jacobian": self.min_jacobian,
            "fold_count": self.fold_count,
            "bins": int(self.modulus_histogram.mass.size),
        }


def modulus_histogram(mesh: TriangleMesh, mu, bins: int = DEFAULT_BINS) -> Histogram:
    """Area-weighted histogram of ``|mu|`` on ``bins`` equal bins over [0, 1)."""
    if bins < 1:
        raise ValueError("bins must be positive")
    m = np.abs(mesh.check_field(mu))
    mass, edges = np.histogram(m, bins=bins, range=(0.0, 1.0), weights=mesh.face_areas)
    return Histogram(edges, mass)


def arg_laplacian_stats(mesh: TriangleMesh, mu, dir_eps: float = DIR_EPS) -> ArgLaplacian:
    """Dual-graph Laplacian of ``arg(mu)``.

    For each interior face T (three edge neighbours) the value is the
    area-weighted mean over neighbours S of ``arg(mu_S) - arg(mu_T)``, each
    difference taken in (-pi, pi].  This is the quantity that the smoothing
    operator drives to zero, so it vanishes at its fixed points.  Faces with a
    neighbour (or themselves) of modulus ``<= dir_eps`` are skipped.
    """
    mu = mesh.check_field(mu)
    adj = mesh.face_adjacency.tocoo()
    t, s = adj.row, adj.col
    a = mesh.face_areas
    diff = np.angle(mu[s] * np.conj(mu[t]))
    n_nbr = np.bincount(t, minlength=mesh.n_faces)
    wsum = np.bincount(t, weights=a[s], minlength=mesh.n_faces)
    acc = np.bincount(t, weights=a[s] * diff, minlength=mesh.n_faces)
    tiny = np.abs(mu) <= dir_eps
    bad_nbr = np.bincount(t, weights=tiny[s].astype(float), minlength=mesh.n_faces) > 0
    interior = n_nbr == 3
    ok = interior & ~tiny & ~bad_nbr
    values = np.full(mesh.n_faces, np.nan)
    values[ok] = acc[ok] / wsum[ok]
    excluded = int(np.count_nonzero(interior & ~ok))
    med = float(np.median(np.abs(values[ok]))) if ok.any() else float("nan")
    return ArgLaplacian(values, med, excluded)


def hopf_residual(mesh: TriangleMesh, values, mu) -> float:
    """L1 norm of ``f_zeta conj(f_zetabar)`` in the auxiliary metric ``|dz + mu dzbar|^2``.

    With ``f_zetabar = (f_zbar - mu f_z)/(1-|mu|^2)``, ``f_zeta = (f_z - conj(mu) f_zbar)/(1-|mu|^2)``
    and area element ``(1-|mu|^2) dA``.
    """
    mu = mesh.check_field(mu)
    m2 = np.abs(mu) ** 2
    if m2.max() >= 1:
        raise ValueError("hopf residual needs |mu| < 1")
    d = wirtinger_derivatives(mesh, values)
    s = 1.0 - m2
    fzeta = (d.fz - np.conj(mu) * d.fzbar) / s
    fzetabar = (d.fzbar - mu * d.fz) / s
    return float(np.dot(mesh.face_areas * s, np.abs(fzeta * np.conj(fzetabar))))


def compute_diagnostics(mesh: TriangleMesh, values, mu, bins: int = DEFAULT_BINS) -> DiagnosticsReport:
    hist = modulus_histogram(mesh, mu, bins)
    lap = arg_laplacian_stats(mesh, mu)
    jac = jacobians(mesh, values)
    return DiagnosticsReport(
        modulus_histogram=hist,
        arg_laplacian=lap.values,
        arg_laplacian_median_abs=lap.median_abs,
        hopf_residual_norm=hopf_residual(mesh, values, mu),
        min_jacobian=float(jac.min()),
        fold_count=int(np.count_nonzero(jac <= 0)),
        arg_laplacian_excluded=lap.excluded,
    )


def write_report(report: DiagnosticsReport, path, extra: dict | None = None) -> Path:
    """Write ``diagnostics.json``, ``hist.csv`` and ``arglap.csv`` into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    scalars = report.scalars()
    if extra:
        scalars.update(extra)
    (out / "diagnostics.json").write_text(json.dumps(scalars, indent=2) + "\n")
    edges, mass = report.modulus_histogram
    with (out / "hist.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "mass"])
        for lo, hi, m in zip(edges[:-1].tolist(), edges[1:].tolist(), mass.tolist()):
            w.writerow([repr(lo), repr(hi), repr(m)])
    with (out / "arglap.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["face", "value"])
        for i in np.flatnonzero(np.isfinite(report.arg_laplacian)).tolist():
            w.writerow([i, repr(float(report.arg_laplacian[i]))])
    return out


def read_report(path, n_faces: int | None = None) -> DiagnosticsReport:
    """Inverse of :func:`write_report`."""
    src = Path(path)
    scalars = json.loads((src / "diagnostics.json").read_text())
    with (src / "hist.csv").open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    edges = np.array([float(r["bin_lo"]) for r in rows] + [float(rows[-1]["bin_hi"])])
    mass = np.array([float(r["mass"]) for r in rows])
    with (src / "arglap.csv").open(newline="") as fh:
        lap_rows = list(csv.DictReader(fh))
    size = n_faces if n_faces is not None else (max((int(r["face"]) for r in lap_rows), default=-1) + 1)
    lap = np.full(size, np.nan)
    for r in lap_rows:
        lap[int(r["face"])] = float(r["value"])
    return DiagnosticsReport(
        modulus_histogram=Histogram(edges, mass),
        arg_laplacian=lap,
        arg_laplacian_median_abs=scalars["arg_laplacian_median_abs"],
        hopf_residual_norm=scalars["hopf_residual_norm"],
        min_jacobian=scalars["min_jacobian"],
        fold_count=scalars["fold_count"],
        arg_laplacian_excluded=scalars.get("arg_laplacian_excluded", 0),
    )
