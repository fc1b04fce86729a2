"""Deterministic ring meshes and the bundled test cases.

Meshes are built from concentric vertex rings; consecutive rings are
stitched by merging their angular orders, which gives near-equilateral
triangles for the disk (6k vertices on ring k) and for the annulus
(geometrically spaced rings, alternately offset by half a step).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mesh import ConstraintSet, TriangleMesh, make_constraints, save_constraints, save_mesh

TESTCASES = ("affine", "identity", "landmarks", "annulus")

AFFINE_MU = 0.3
ANNULUS_INNER = 0.4
ANNULUS_K = 1.5
LANDMARK_RADIUS = 0.5
LANDMARK_SHIFT = 0.06


def _stitch(inner: np.ndarray, inner_ang: np.ndarray, outer: np.ndarray, outer_ang: np.ndarray) -> list:
    """Triangulate the band between two closed rings sorted by angle."""
    m, n = inner.size, outer.size
    if m == 1:
        return [[inner[0], outer[j], outer[(j + 1) % n]] for j in range(n)]
    ia = np.append(inner_ang, inner_ang[0] + 2 * np.pi)
    oa = np.append(outer_ang, outer_ang[0] + 2 * np.pi)
    tris = []
    i = j = 0
    while i < m or j < n:
        advance_outer = j < n and (i >= m or oa[j + 1] <= ia[i + 1])
        if advance_outer:
            tris.append([inner[i % m], outer[j % n], outer[(j + 1) % n]])
            j += 1
        else:
            tris.append([inner[i % m], outer[j % n], inner[(i + 1) % m]])
            i += 1
    return tris


def _orient(z: np.ndarray, faces: np.ndarray) -> np.ndarray:
    a, b, c = z[faces[:, 0]], z[faces[:, 1]], z[faces[:, 2]]
    cw = np.imag(np.conj(b - a) * (c - a)) < 0
    faces[cw] = faces[cw][:, [0, 2, 1]]
    return faces


def disk_mesh(n_faces: int = 2048) -> TriangleMesh:
    """Unit-disk mesh with ``6 n^2 >= n_faces`` faces (smallest such ``n``)."""
    n = max(1, int(np.ceil(np.sqrt(n_faces / 6.0) - 1e-9)))
    z = [0j]
    rings = [(np.array([0]), np.array([0.0]))]
    for k in range(1, n + 1):
        ang = 2 * np.pi * np.arange(6 * k) / (6 * k)
        idx = np.arange(len(z), len(z) + 6 * k)
        z.extend((k / n) * np.exp(1j * ang))
        rings.append((idx, ang))
    tris = []
    for (ii, ia), (oi, oa) in zip(rings[:-1], rings[1:]):
        tris += _stitch(ii, ia, oi, oa)
    z = np.array(z)
    return TriangleMesh(z, _orient(z, np.array(tris, dtype=np.int64)))


def annulus_mesh(n_faces: int = 2048, inner_radius: float = ANNULUS_INNER) -> TriangleMesh:
    """Annulus ``inner_radius < |z| < 1`` with geometrically spaced rings."""
    log_ratio = np.log(1.0 / inner_radius)
    # near-square cells in log-polar coordinates: per_ring ~ 2 pi m / log_ratio
    m = max(1, int(round(np.sqrt(n_faces * log_ratio / (4 * np.pi)))))
    per_ring = max(3, int(round(2 * np.pi * m / log_ratio)))
    z = []
    rings = []
    for j in range(m + 1):
        r = inner_radius * np.exp(log_ratio * j / m)
        ang = 2 * np.pi * (np.arange(per_ring) + 0.5 * (j % 2)) / per_ring
        idx = np.arange(len(z), len(z) + per_ring)
        z.extend(r * np.exp(1j * ang))
        rings.append((idx, ang))
    tris = []
    for (ii, ia), (oi, oa) in zip(rings[:-1], rings[1:]):
        tris += _stitch(ii, ia, oi, oa)
    z = np.array(z)
    return TriangleMesh(z, _orient(z, np.array(tris, dtype=np.int64)))


def affine_map(z, a: complex = 1.0, b: complex = AFFINE_MU, c: complex = 0.0):
    z = np.asarray(z, dtype=complex)
    return a * z + b * np.conj(z) + c


def radial_stretch(z, K: float = ANNULUS_K):
    """``|z|^(K-1) z``: the Teichmueller map between round annuli, ``|mu| = (K-1)/(K+1)``."""
    z = np.asarray(z, dtype=complex)
    return np.abs(z) ** (K - 1) * z


def landmark_layout(mesh: TriangleMesh, count: int = 6, radius: float = LANDMARK_RADIUS, shift: float = LANDMARK_SHIFT):
    """Pick ``count`` interior vertices near a circle and displace them tangentially.

    Alternate landmarks move clockwise and counterclockwise so the target
    configuration is not a rigid rotation of the source.
    """
    interior = np.setdiff1d(np.arange(mesh.n_vertices), mesh.boundary_vertices)
    zi = mesh.vertices[interior]
    idx, tgt = [], []
    for j in range(count):
        p = radius * np.exp(2j * np.pi * (j + 0.5) / count)
        v = int(interior[np.argmin(np.abs(zi - p))])
        q = mesh.vertices[v]
        sign = 1.0 if j % 2 == 0 else -1.0
        idx.append(v)
        tgt.append(q + sign * shift * 1j * q / abs(q))
    return np.array(idx), np.array(tgt)


@dataclass(frozen=True)
class TestCase:
    name: str
    mesh: TriangleMesh
    constraints: ConstraintSet

    __test__ = False  # keep pytest from collecting this class


def make_testcase(name: str, size: int = 2048) -> TestCase:
    """Build one of the bundled cases: affine, identity, landmarks or annulus."""
    if name == "annulus":
        mesh = annulus_mesh(size)
    elif name in TESTCASES:
        mesh = disk_mesh(size)
    else:
        raise ValueError(f"unknown test case {name!r}; choose from {', '.join(TESTCASES)}")
    bidx = np.concatenate(mesh.boundary_loops)
    zb = mesh.vertices[bidx]
    lidx, ltgt = (), ()
    if name == "affine":
        btgt = affine_map(zb)
    elif name == "annulus":
        btgt = radial_stretch(zb)
    else:
        btgt = zb.copy()
    if name == "landmarks":
        lidx, ltgt = landmark_layout(mesh)
    cons = make_constraints(mesh, bidx, btgt, lidx, ltgt, full_boundary=True)
    return TestCase(name, mesh, cons)


def write_testcase(case: TestCase, directory) -> tuple[Path, Path]:
    """Write ``<name>.off`` and ``<name>.csv`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    mesh_path = directory / f"{case.name}.off"
    cons_path = directory / f"{case.name}.csv"
    save_mesh(mesh_path, case.mesh)
    save_constraints(cons_path, case.constraints)
    return mesh_path, cons_path
