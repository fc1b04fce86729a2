"""Harmonic energy and the Teichmueller energy gap.

For a constant-modulus field ``mu`` (``|mu| = k``) the harmonic energy of a
map measured in the auxiliary metric ``|dz + mu dzbar|^2`` splits as

    E_BC = 2 / (1 - k^2) * sum_T area_T |f_zbar - mu f_z|^2 + A(target),

so the gap ``E_BC - A`` is a scaled LBS residual and never negative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lbs import residual_energy
from .mesh import TriangleMesh, signed_areas, wirtinger_derivatives

GAP_EPS = 1e-9
CONSTANT_MODULUS_TOL = 1e-9


@dataclass(frozen=True)
class EnergyReport:
    harmonic_energy: float
    energy_gap: float
    target_area: float
    k_modulus: float

    @property
    def gap_eps(self) -> float:
        return GAP_EPS * abs(self.harmonic_energy)


def harmonic_energy(mesh: TriangleMesh, values) -> float:
    """``sum_T area_T (|f_z|^2 + |f_zbar|^2)`` with flat source and target metrics."""
    d = wirtinger_derivatives(mesh, values)
    return float(np.dot(mesh.face_areas, np.abs(d.fz) ** 2 + np.abs(d.fzbar) ** 2))


def mapped_area(mesh: TriangleMesh, values) -> float:
    """Total signed area of the image triangles (fixed by the boundary values)."""
    w = mesh.check_map(values)
    return float(signed_areas(w, mesh.faces).sum())


def energy_gap(mesh: TriangleMesh, values, mu, target_area: float | None = None, strict: bool = True) -> EnergyReport:
    """Energy gap of ``values`` against a constant-modulus Beltrami field.

    With ``strict=False`` a non-constant modulus is accepted and the prefactor
    ``2 / (1 - |mu_T|^2)`` is applied face by face; this is the same pointwise
    identity, but critical points of the LBS energy then no longer coincide
    with auxiliary-metric harmonic maps.
    """
    mu = mesh.check_field(mu)
    m = np.abs(mu)
    k = float(np.dot(mesh.face_areas, m) / mesh.area)
    if m.max() >= 1:
        raise ValueError(f"modulus must be < 1, got {m.max()}")
    if target_area is None:
        target_area = mapped_area(mesh, values)
    if strict:
        std = np.sqrt(np.dot(mesh.face_areas, (m - k) ** 2) / mesh.area)
        if std > CONSTANT_MODULUS_TOL:
            raise ValueError("energy gap needs a constant-modulus field; project it first")
        gap = 2.0 / (1.0 - k * k) * residual_energy(mesh, values, mu)
    else:
        d = wirtinger_derivatives(mesh, values)
        r = np.abs(d.fzbar - mu * d.fz) ** 2
        gap = float(np.dot(mesh.face_areas * 2.0 / (1.0 - m * m), r))
    return EnergyReport(gap + float(target_area), gap, float(target_area), k)


def lower_bound_check(report: EnergyReport) -> bool:
    """Discrete check of ``E_BC >= A(target)`` up to the relative floor."""
    eps = report.gap_eps
    return report.energy_gap >= -eps and report.harmonic_energy >= report.target_area - eps
