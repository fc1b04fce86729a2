"""Linear Beltrami solver.

Finds the piecewise-linear map minimizing

    E(f) = sum_T area_T |f_zbar,T - mu_T f_z,T|^2

subject to Dirichlet values on the constrained vertices.  The residual
``f_zbar - mu f_z`` is complex-linear in the vertex values, so the normal
equations form a Hermitian positive definite system over the free vertices.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .mesh import ConstraintError, ConstraintSet, TriangleMesh, wirtinger_derivatives

log = logging.getLogger(__name__)

SOLVER_TOL = 1e-10


class LbsError(RuntimeError):
    """The LBS system could not be solved to tolerance."""


@dataclass
class LbsSystem:
    matrix: sparse.csc_matrix
    rhs: np.ndarray
    free_index_map: np.ndarray
    constrained_index: np.ndarray
    constrained_value: np.ndarray
    _lu: object = field(default=None, repr=False)

    @property
    def constrained(self) -> list[tuple[int, complex]]:
        return list(zip(self.constrained_index.tolist(), self.constrained_value.tolist()))

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(self.free_index_map >= 0)

    @property
    def n_vertices(self) -> int:
        return self.free_index_map.size


def residual_operator(mesh: TriangleMesh, mu) -> sparse.csr_matrix:
    """Sparse operator ``f -> f_zbar - mu f_z`` (faces x vertices)."""
    dz, dzbar = mesh.wirtinger_operators
    return (dzbar - sparse.diags(mu) @ dz).tocsr()


def assemble(mesh: TriangleMesh, mu, constraints: ConstraintSet) -> LbsSystem:
    mu = mesh.check_field(mu)
    if np.abs(mu).max() >= 1:
        raise ValueError(f"inadmissible Beltrami field: max |mu| = {np.abs(mu).max()} >= 1")
    if len(constraints) == 0:
        raise ConstraintError("LBS needs at least one constrained vertex")
    B = residual_operator(mesh, mu)
    A = (B.conj().T @ sparse.diags(mesh.face_areas) @ B).tocsc()

    cidx = constraints.index
    cval = constraints.target
    slot = np.full(mesh.n_vertices, -1, dtype=np.int64)
    free = np.setdiff1d(np.arange(mesh.n_vertices), cidx)
    slot[free] = np.arange(free.size)

    A_ff = A[free][:, free]
    A_fc = A[free][:, cidx]
    # symmetrize away round-off so the matrix is Hermitian bit-for-bit
    A_ff = ((A_ff + A_ff.conj().T) * 0.5).tocsc()
    rhs = -(A_fc @ cval)
    return LbsSystem(A_ff, np.asarray(rhs).ravel(), slot, cidx, cval)


def _factor(system: LbsSystem):
    if system._lu is None:
        system._lu = spla.splu(system.matrix, permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})
    return system._lu


def solve(system: LbsSystem, tol: float = SOLVER_TOL) -> np.ndarray:
    """Return the constrained minimizer as a complex vertex array."""
    out = np.zeros(system.n_vertices, dtype=complex)
    out[system.constrained_index] = system.constrained_value
    n = system.matrix.shape[0]
    if n == 0:
        return out
    A, b = system.matrix, system.rhs
    try:
        x = _factor(system).solve(b)
    except RuntimeError as exc:
        log.warning("direct factorization failed (%s); falling back to conjugate gradients", exc)
        x, info = spla.cg(A, b, rtol=tol * 1e-2, maxiter=20 * n)
        if info != 0:
            raise LbsError(f"conjugate gradients did not converge (info={info})") from exc
    bnorm = np.linalg.norm(b)
    res = np.linalg.norm(A @ x - b)
    if not np.all(np.isfinite(x)) or (bnorm > 0 and res > tol * bnorm) or (bnorm == 0 and res > tol):
        raise LbsError(f"linear solve residual {res:.3e} exceeds tolerance (|b| = {bnorm:.3e})")
    out[system.free] = x
    return out


def lbs(mesh: TriangleMesh, mu, constraints: ConstraintSet) -> np.ndarray:
    """Assemble and solve in one call."""
    return solve(assemble(mesh, mu, constraints))


def residual_energy(mesh: TriangleMesh, values, mu) -> float:
    """``sum_T area_T |f_zbar - mu f_z|^2``."""
    mu = mesh.check_field(mu)
    d = wirtinger_derivatives(mesh, values)
    return float(np.dot(mesh.face_areas, np.abs(d.fzbar - mu * d.fz) ** 2))


def dump_matrix(system: LbsSystem, path) -> None:
    """Write the free-vertex matrix as ``row col re im`` lines."""
    coo = system.matrix.tocoo()
    with Path(path).open("w") as fh:
        for r, c, v in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()):
            fh.write(f"{r} {c} {v.real!r} {v.imag!r}\n")
