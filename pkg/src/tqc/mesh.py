"""Planar triangle meshes, piecewise-linear maps and per-face Wirtinger derivatives.

Vertex positions and map values are stored as complex numbers ``x + iy``.
A piecewise-linear map is simply a complex array with one entry per vertex;
a Beltrami field is a complex array with one entry per face.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import sparse

log = logging.getLogger(__name__)

AREA_EPS = 1e-10


class MeshError(ValueError):
    """Raised for malformed, degenerate or non-manifold meshes."""


class ConstraintError(ValueError):
    """Raised for invalid boundary/landmark correspondences."""


class FaceDerivatives(NamedTuple):
    fz: np.ndarray
    fzbar: np.ndarray


def signed_areas(z: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Signed area of each triangle (positive when counterclockwise)."""
    a, b, c = z[faces[:, 0]], z[faces[:, 1]], z[faces[:, 2]]
    return 0.5 * np.imag(np.conj(b - a) * (c - a))


def polygon_area(z: np.ndarray) -> float:
    """Shoelace signed area of a closed polygon given by its vertices in order."""
    z = np.asarray(z, dtype=complex)
    return 0.5 * float(np.sum(np.imag(np.conj(z) * np.roll(z, -1))))


class TriangleMesh:
    """Oriented planar triangle mesh.

    Faces are reoriented counterclockwise on construction (with a warning).
    Faces whose area falls below ``AREA_EPS`` times the mean face area are
    rejected, as are non-manifold edges.
    """

    def __init__(self, vertices, faces, area_eps: float = AREA_EPS):
        z = np.asarray(vertices)
        if not np.iscomplexobj(z):
            z = np.asarray(z, dtype=float)
            if z.ndim != 2 or z.shape[1] < 2:
                raise MeshError("vertices must be complex or an (n, 2) array")
            z = z[:, 0] + 1j * z[:, 1]
        z = np.ascontiguousarray(z, dtype=complex)
        faces = np.array(faces, dtype=np.int64).reshape(-1, 3) if len(faces) else np.zeros((0, 3), np.int64)

        if z.size < 3 or len(faces) < 1:
            raise MeshError("empty mesh: need at least 3 vertices and 1 face")
        if not np.all(np.isfinite(z)):
            raise MeshError("non-finite vertex coordinates")
        if faces.min() < 0 or faces.max() >= z.size:
            raise MeshError("face index out of range")
        if np.any((faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])):
            raise MeshError("face with repeated vertex index")

        area = signed_areas(z, faces)
        flip = area < 0
        if flip.any():
            warnings.warn(f"reoriented {int(flip.sum())} clockwise face(s) counterclockwise", stacklevel=2)
            faces[flip] = faces[flip][:, [0, 2, 1]]
            area = np.abs(area)
        floor = area_eps * area.mean()
        bad = np.flatnonzero(area <= floor)
        if bad.size:
            raise MeshError(f"degenerate face {int(bad[0])} (area {area[bad[0]]:.3e} <= {floor:.3e})")

        self.vertices = z
        self.faces = faces
        self.face_areas = area
        self.vertices.flags.writeable = False
        self.faces.flags.writeable = False
        self.face_areas.flags.writeable = False
        self._check_manifold()

    def __repr__(self):
        return f"TriangleMesh(n_vertices={self.n_vertices}, n_faces={self.n_faces}, n_loops={len(self.boundary_loops)})"

    @property
    def n_vertices(self) -> int:
        return self.vertices.size

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def area(self) -> float:
        return float(self.face_areas.sum())

    # -- connectivity -------------------------------------------------

    @cached_property
    def _half_edges(self):
        f = self.faces
        src = f.reshape(-1)
        dst = f[:, [1, 2, 0]].reshape(-1)
        face = np.repeat(np.arange(self.n_faces), 3)
        return src, dst, face

    def _check_manifold(self):
        src, dst, _ = self._half_edges
        n = self.n_vertices
        directed = src * n + dst
        if np.unique(directed).size != directed.size:
            raise MeshError("non-manifold or inconsistently oriented edge (duplicate half-edge)")
        undirected = np.minimum(src, dst) * n + np.maximum(src, dst)
        _, counts = np.unique(undirected, return_counts=True)
        if counts.max() > 2:
            raise MeshError("non-manifold edge shared by more than two faces")

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as a sorted (m, 2) array."""
        src, dst, _ = self._half_edges
        e = np.stack([np.minimum(src, dst), np.maximum(src, dst)], axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        """Directed boundary half-edges (domain on the left)."""
        src, dst, _ = self._half_edges
        n = self.n_vertices
        keys = src * n + dst
        rev = dst * n + src
        on_boundary = ~np.isin(rev, keys)
        return np.stack([src[on_boundary], dst[on_boundary]], axis=1)

    @cached_property
    def boundary_loops(self) -> list[np.ndarray]:
        return boundary_loops(self)

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    @cached_property
    def face_adjacency(self) -> sparse.csr_matrix:
        """Symmetric 0/1 matrix linking faces that share an edge."""
        src, dst, face = self._half_edges
        n = self.n_vertices
        keys = src * n + dst
        order = np.argsort(keys)
        rev = dst * n + src
        pos = np.searchsorted(keys[order], rev)
        pos = np.minimum(pos, keys.size - 1)
        hit = keys[order][pos] == rev
        i = face[hit]
        j = face[order][pos[hit]]
        m = sparse.coo_matrix((np.ones(i.size), (i, j)), shape=(self.n_faces, self.n_faces))
        return m.tocsr()

    # -- differential operators --------------------------------------

    @cached_property
    def wirtinger_operators(self) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
        """Sparse (n_faces, n_vertices) operators ``Dz``, ``Dzbar``.

        For a vertex i of face (i, j, k) the hat-function gradient, as a complex
        number ``gx + i gy``, is ``i (z_k - z_j) / (2 A)``.  Then
        ``f_z = sum f_i conj(grad_i) / 2`` and ``f_zbar = sum f_i grad_i / 2``.
        """
        z = self.vertices
        f = self.faces
        opposite = np.stack([z[f[:, 2]] - z[f[:, 1]], z[f[:, 0]] - z[f[:, 2]], z[f[:, 1]] - z[f[:, 0]]], axis=1)
        grad = 1j * opposite / (2.0 * self.face_areas[:, None])
        rows = np.repeat(np.arange(self.n_faces), 3)
        cols = f.reshape(-1)
        shape = (self.n_faces, self.n_vertices)
        dz = sparse.csr_matrix((0.5 * np.conj(grad).reshape(-1), (rows, cols)), shape=shape)
        dzbar = sparse.csr_matrix((0.5 * grad.reshape(-1), (rows, cols)), shape=shape)
        return dz, dzbar

    def check_map(self, values) -> np.ndarray:
        w = np.asarray(values)
        if w.ndim == 2 and w.shape[1] == 2 and not np.iscomplexobj(w):
            w = w[:, 0] + 1j * w[:, 1]
        w = np.asarray(w, dtype=complex)
        if w.shape != (self.n_vertices,):
            raise ValueError(f"map has shape {w.shape}, expected ({self.n_vertices},)")
        if not np.all(np.isfinite(w)):
            raise ValueError("map contains non-finite values")
        return w

    def check_field(self, values) -> np.ndarray:
        mu = np.asarray(values, dtype=complex)
        if mu.ndim == 0:
            mu = np.full(self.n_faces, complex(mu))
        if mu.shape != (self.n_faces,):
            raise ValueError(f"field has shape {mu.shape}, expected ({self.n_faces},)")
        if not np.all(np.isfinite(mu)):
            raise ValueError("field contains non-finite values")
        return mu


def wirtinger_derivatives(mesh: TriangleMesh, values) -> FaceDerivatives:
    """Per-face ``(f_z, f_zbar)`` of the piecewise-linear interpolant of ``values``.

    Evaluated from edge differences ``f_j - f_i``, ``f_k - f_i`` (the hat
    gradients sum to zero), so adding a constant to the map changes nothing
    and affine maps are reproduced with minimal round-off.
    """
    w = mesh.check_map(values)
    z, f = mesh.vertices, mesh.faces
    two_area = 2.0 * mesh.face_areas
    gj = 1j * (z[f[:, 0]] - z[f[:, 2]]) / two_area
    gk = 1j * (z[f[:, 1]] - z[f[:, 0]]) / two_area
    dj = w[f[:, 1]] - w[f[:, 0]]
    dk = w[f[:, 2]] - w[f[:, 0]]
    return FaceDerivatives(0.5 * (dj * np.conj(gj) + dk * np.conj(gk)), 0.5 * (dj * gj + dk * gk))


def jacobians(mesh: TriangleMesh, values) -> np.ndarray:
    """Per-face Jacobian ``|f_z|^2 - |f_zbar|^2`` (mapped / source signed area)."""
    d = wirtinger_derivatives(mesh, values)
    return np.abs(d.fz) ** 2 - np.abs(d.fzbar) ** 2


def boundary_loops(mesh: TriangleMesh) -> list[np.ndarray]:
    """Boundary loops, each traversed with the domain on its left.

    The loop with the largest enclosed area (the outer boundary) comes first;
    inner loops follow ordered by their smallest vertex index.  Each loop starts
    at its smallest vertex index.
    """
    be = mesh.boundary_edges
    if be.size == 0:
        return []
    nxt = {}
    for s, d in be:
        if s in nxt:
            raise MeshError(f"non-manifold boundary at vertex {s}")
        nxt[int(s)] = int(d)
    seen = set()
    loops = []
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        v = nxt[start]
        while v != start:
            if v in seen or v not in nxt:
                raise MeshError(f"non-manifold boundary at vertex {v}")
            loop.append(v)
            seen.add(v)
            v = nxt[v]
        loops.append(np.array(loop, dtype=np.int64))
    areas = [polygon_area(mesh.vertices[lp]) for lp in loops]
    outer = int(np.argmax(areas))
    return [loops[outer]] + [lp for i, lp in enumerate(loops) if i != outer]


# -- file I/O ----------------------------------------------------------


def _strip_comments(lines):
    for line in lines:
        line = line.split("#", 1)[0].strip()
        if line:
            yield line


def read_mesh_arrays(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse an OFF or OBJ file into raw ``(complex vertices, faces)`` without validation."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mesh file not found: {path}")
    suffix = path.suffix.lower()
    text = path.read_text().splitlines()
    try:
        if suffix == ".obj":
            xyz, faces = _parse_obj(text)
        else:
            xyz, faces = _parse_off(text)
    except (ValueError, IndexError) as exc:
        raise MeshError(f"could not parse {path}: {exc}") from exc
    if xyz.shape[1] > 2 and np.any(xyz[:, 2] != 0):
        warnings.warn(f"{path}: nonzero third coordinate ignored", stacklevel=2)
    return xyz[:, 0] + 1j * xyz[:, 1], faces


def _parse_off(lines):
    tokens = list(_strip_comments(lines))
    head = tokens[0].split()
    if not head[0].endswith("OFF"):
        raise ValueError("missing OFF header")
    rest = head[1:]
    i = 1
    if not rest:
        rest = tokens[1].split()
        i = 2
    nv, nf = int(rest[0]), int(rest[1])
    xyz = np.array([[float(t) for t in tokens[i + k].split()[:3]] for k in range(nv)])
    faces = []
    for k in range(nf):
        row = tokens[i + nv + k].split()
        if int(row[0]) != 3:
            raise ValueError(f"face {k} is not a triangle")
        faces.append([int(t) for t in row[1:4]])
    return xyz.reshape(nv, -1), np.array(faces, dtype=np.int64).reshape(-1, 3)


def _parse_obj(lines):
    verts, faces = [], []
    for line in _strip_comments(lines):
        parts = line.split()
        if parts[0] == "v":
            verts.append([float(t) for t in parts[1:4]])
        elif parts[0] == "f":
            idx = []
            for t in parts[1:]:
                k = int(t.split("/")[0])
                idx.append(k - 1 if k > 0 else len(verts) + k)
            if len(idx) != 3:
                raise ValueError("only triangular faces are supported")
            faces.append(idx)
    return np.array(verts, dtype=float), np.array(faces, dtype=np.int64).reshape(-1, 3)


def load_mesh(path) -> TriangleMesh:
    z, faces = read_mesh_arrays(path)
    return TriangleMesh(z, faces)


def save_off(path, vertices, faces) -> None:
    """Write an OFF file with round-trip float formatting (z coordinate 0)."""
    z = np.asarray(vertices, dtype=complex)
    lines = ["OFF", f"{z.size} {len(faces)} 0"]
    lines += [f"{x!r} {y!r} 0.0" for x, y in zip(z.real.tolist(), z.imag.tolist())]
    lines += [f"3 {a} {b} {c}" for a, b, c in np.asarray(faces).tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def save_mesh(path, mesh: TriangleMesh) -> None:
    save_off(path, mesh.vertices, mesh.faces)


# -- constraints -------------------------------------------------------


@dataclass(frozen=True)
class ConstraintSet:
    """Dirichlet boundary correspondence plus interior landmarks."""

    boundary_index: np.ndarray
    boundary_target: np.ndarray
    landmark_index: np.ndarray
    landmark_target: np.ndarray
    target_area: float

    @property
    def index(self) -> np.ndarray:
        return np.concatenate([self.boundary_index, self.landmark_index])

    @property
    def target(self) -> np.ndarray:
        return np.concatenate([self.boundary_target, self.landmark_target])

    @property
    def boundary(self) -> list[tuple[int, complex]]:
        return list(zip(self.boundary_index.tolist(), self.boundary_target.tolist()))

    @property
    def landmarks(self) -> list[tuple[int, complex]]:
        return list(zip(self.landmark_index.tolist(), self.landmark_target.tolist()))

    def __len__(self):
        return self.boundary_index.size + self.landmark_index.size


def mapped_boundary_area(mesh: TriangleMesh, index, target) -> float:
    """Signed area enclosed by the mapped boundary loops (outer minus holes)."""
    lookup = dict(zip(np.asarray(index).tolist(), np.asarray(target).tolist()))
    total = 0.0
    for loop in mesh.boundary_loops:
        missing = [v for v in loop.tolist() if v not in lookup]
        if missing:
            raise ConstraintError(f"boundary vertex {missing[0]} has no target; cannot compute target area")
        total += polygon_area([lookup[v] for v in loop.tolist()])
    return total


def make_constraints(
    mesh: TriangleMesh,
    boundary_index,
    boundary_target,
    landmark_index=(),
    landmark_target=(),
    target_area: float | None = None,
    full_boundary: bool = False,
) -> ConstraintSet:
    """Validate and bundle a correspondence into a :class:`ConstraintSet`."""
    bi = np.asarray(boundary_index, dtype=np.int64).reshape(-1)
    bt = np.asarray(boundary_target, dtype=complex).reshape(-1)
    li = np.asarray(landmark_index, dtype=np.int64).reshape(-1)
    lt = np.asarray(landmark_target, dtype=complex).reshape(-1)
    if bi.size != bt.size or li.size != lt.size:
        raise ConstraintError("index/target length mismatch")
    allidx = np.concatenate([bi, li])
    if allidx.size == 0:
        raise ConstraintError("empty constraint set")
    if allidx.min() < 0 or allidx.max() >= mesh.n_vertices:
        raise ConstraintError("constraint vertex index out of range")
    if np.unique(allidx).size != allidx.size:
        vals, counts = np.unique(allidx, return_counts=True)
        dup = int(vals[counts > 1][0])
        raise ConstraintError(f"duplicate constraint on vertex {dup}")
    if not (np.all(np.isfinite(bt)) and np.all(np.isfinite(lt))):
        raise ConstraintError("non-finite constraint target")
    on_boundary = np.isin(bi, mesh.boundary_vertices)
    if not on_boundary.all():
        raise ConstraintError(f"boundary constraint names interior vertex {bi[~on_boundary][0]}")
    lm_on_boundary = np.isin(li, mesh.boundary_vertices)
    if lm_on_boundary.any():
        raise ConstraintError(f"landmark names boundary vertex {li[lm_on_boundary][0]}")
    if full_boundary and bi.size < mesh.boundary_vertices.size:
        raise ConstraintError(
            f"{bi.size} boundary rows for {mesh.boundary_vertices.size} boundary vertices (full boundary required)"
        )
    if target_area is None:
        target_area = mapped_boundary_area(mesh, bi, bt)
    target_area = float(target_area)
    if not target_area > 0:
        raise ConstraintError(f"target area must be positive, got {target_area}")
    return ConstraintSet(bi, bt, li, lt, target_area)


def load_constraints(path, mesh: TriangleMesh, full_boundary: bool = False) -> ConstraintSet:
    """Read a ``vertex_index,target_x,target_y,kind`` CSV file.

    An optional comment line ``# target_area=<float>`` overrides the area
    computed from the mapped boundary loops.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"constraint file not found: {path}")
    target_area = None
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        body = []
        for line in fh:
            s = line.strip()
            if s.startswith("#"):
                key, _, val = s.lstrip("#").partition("=")
                if key.strip() == "target_area":
                    target_area = float(val)
            elif s:
                body.append(s)
    reader = csv.DictReader(body)
    expected = ["vertex_index", "target_x", "target_y", "kind"]
    if reader.fieldnames != expected:
        raise ConstraintError(f"bad header {reader.fieldnames}, expected {expected}")
    for n, row in enumerate(reader, start=2):
        kind = row["kind"].strip()
        if kind not in ("boundary", "landmark"):
            raise ConstraintError(f"row {n}: unknown kind {kind!r}")
        try:
            rows.append((int(row["vertex_index"]), complex(float(row["target_x"]), float(row["target_y"])), kind))
        except (TypeError, ValueError) as exc:
            raise ConstraintError(f"row {n}: {exc}") from exc
    b = [(i, t) for i, t, k in rows if k == "boundary"]
    lm = [(i, t) for i, t, k in rows if k == "landmark"]
    return make_constraints(
        mesh,
        [i for i, _ in b],
        [t for _, t in b],
        [i for i, _ in lm],
        [t for _, t in lm],
        target_area=target_area,
        full_boundary=full_boundary,
    )


def save_constraints(path, constraints: ConstraintSet, write_area: bool = False) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        if write_area:
            fh.write(f"# target_area={constraints.target_area!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vertex_index", "target_x", "target_y", "kind"])
        for kind, idx, tgt in (
            ("boundary", constraints.boundary_index, constraints.boundary_target),
            ("landmark", constraints.landmark_index, constraints.landmark_target),
        ):
            for i, t in zip(idx.tolist(), tgt.tolist()):
                w.writerow([i, repr(t.real), repr(t.imag), kind])
