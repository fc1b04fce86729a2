"""Per-face Beltrami fields: extraction, projection, smoothing and dilation."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mesh import TriangleMesh, wirtinger_derivatives

MU_CAP = 0.9999
DERIV_EPS = 1e-12
DIR_EPS = 1e-14


class DegenerateMapError(ArithmeticError):
    """A face where the map's complex derivative (nearly) vanishes."""

    def __init__(self, face: int, value: float):
        super().__init__(f"face {face}: derivative modulus {value:.3e} below threshold (folded or degenerate face)")
        self.face = face


@dataclass(frozen=True)
class DilationStats:
    max_modulus: float
    mean_modulus: float
    modulus_std: float
    K: float


def _guard(denom: np.ndarray, eps: float) -> None:
    small = np.abs(denom) <= eps
    if small.any():
        f = int(np.flatnonzero(small)[0])
        raise DegenerateMapError(f, float(abs(denom[f])))


def beltrami_of_map(mesh: TriangleMesh, values, deriv_eps: float = DERIV_EPS) -> np.ndarray:
    """Beltrami coefficient ``f_zbar / f_z`` on every face."""
    d = wirtinger_derivatives(mesh, values)
    _guard(d.fz, deriv_eps)
    return d.fzbar / d.fz


def auxiliary_beltrami(mesh: TriangleMesh, values, nu, deriv_eps: float = DERIV_EPS) -> np.ndarray:
    """``(f_zbar + nu f_z) / (f_z - conj(nu) f_zbar)`` per face.

    This is the "+" form of the auxiliary-metric coefficient.  With ``nu = 0``
    it reduces to :func:`beltrami_of_map`.  See :func:`relative_beltrami` for the
    coefficient of ``f`` measured in the coordinate ``dz + nu dzbar``.
    """
    nu = mesh.check_field(nu)
    d = wirtinger_derivatives(mesh, values)
    denom = d.fz - np.conj(nu) * d.fzbar
    _guard(denom, deriv_eps)
    return (d.fzbar + nu * d.fz) / denom


def relative_beltrami(mesh: TriangleMesh, values, nu, deriv_eps: float = DERIV_EPS) -> np.ndarray:
    """Beltrami coefficient of ``f`` in the coordinate ``zeta`` with ``dzeta = dz + nu dzbar``.

    Equals ``(f_zbar - nu f_z) / (f_z - conj(nu) f_zbar)``; it vanishes exactly
    when ``f`` has Beltrami coefficient ``nu``.  With ``r`` this value,
    ``beltrami_of_map(f) = (nu + r) / (1 + conj(nu) r)``, so ``nu + r`` is the
    first-order update of ``nu`` towards the coefficient of ``f``.
    """
    nu = mesh.check_field(nu)
    d = wirtinger_derivatives(mesh, values)
    denom = d.fz - np.conj(nu) * d.fzbar
    _guard(denom, deriv_eps)
    return (d.fzbar - nu * d.fz) / denom


def dilation_stats(field, mesh: TriangleMesh) -> DilationStats:
    mu = mesh.check_field(field)
    m = np.abs(mu)
    w = mesh.face_areas / mesh.area
    mean = float(np.dot(w, m))
    std = float(np.sqrt(max(np.dot(w, (m - mean) ** 2), 0.0)))
    mx = float(m.max())
    if mx >= 1:
        raise ValueError(f"inadmissible field: max |mu| = {mx} >= 1")
    return DilationStats(mx, mean, std, (1 + mx) / (1 - mx))


def project_constant_modulus(mesh: TriangleMesh, field, dir_eps: float = DIR_EPS) -> np.ndarray:
    """Replace every modulus by the area-weighted mean modulus, keeping arguments.

    Faces with ``|mu| <= dir_eps`` have no meaningful direction and are set to 0.
    """
    mu = mesh.check_field(field)
    m = np.abs(mu)
    k = float(np.dot(mesh.face_areas, m) / mesh.area)
    out = np.zeros_like(mu)
    ok = m > dir_eps
    out[ok] = k * (mu[ok] / m[ok])
    return out


def laplacian_smooth(mesh: TriangleMesh, field, lam: float = 0.5, passes: int = 1) -> np.ndarray:
    """Damped dual-graph averaging.

    Each pass replaces ``mu_T`` by ``(1 - lam) mu_T + lam * mean_S(mu_S)``, the
    mean being area-weighted over faces ``S`` sharing an edge with ``T``.
    Isolated faces are left unchanged.
    """
    if not 0 < lam <= 1:
        raise ValueError("lam must lie in (0, 1]")
    if passes < 0:
        raise ValueError("passes must be non-negative")
    mu = mesh.check_field(field).copy()
    adj = mesh.face_adjacency
    a = mesh.face_areas
    wsum = adj @ a
    has = wsum > 0
    for _ in range(passes):
        nbr = adj @ (a * mu)
        mean = mu.copy()
        mean[has] = nbr[has] / wsum[has]
        mu = (1 - lam) * mu + lam * mean
    return mu


def clamp_modulus(field, cap: float = MU_CAP) -> np.ndarray:
    """Rescale values with ``|mu| > cap`` to modulus ``cap``; arguments are kept."""
    if not 0 < cap < 1:
        raise ValueError("cap must lie in (0, 1)")
    mu = np.array(field, dtype=complex)
    m = np.abs(mu)
    over = m > cap
    mu[over] *= cap / m[over]
    return mu


def write_field_csv(path, field) -> None:
    """Write ``face_index,re,im`` rows with round-trip float formatting."""
    mu = np.asarray(field, dtype=complex)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["face_index", "re", "im"])
        for i, (re, im) in enumerate(zip(mu.real.tolist(), mu.imag.tolist())):
            w.writerow([i, repr(re), repr(im)])


def read_field_csv(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = np.zeros(len(rows), dtype=complex)
    for row in rows:
        out[int(row["face_index"])] = complex(float(row["re"]), float(row["im"]))
    return out
