import numpy as np
import pytest
from hypothesis import strategies as st

from tqc.generators import annulus_mesh, disk_mesh
from tqc.mesh import TriangleMesh, make_constraints


def jittered_mesh(seed: int, n: int = 6, jitter: float = 0.2) -> TriangleMesh:
    """Jittered n x n grid with random cell diagonals, scaled and rotated at random."""
    rng = np.random.default_rng(seed)
    g = np.linspace(0.0, 1.0, n)
    x, y = np.meshgrid(g, g)
    pts = np.column_stack([x.ravel(), y.ravel()])
    h = 1.0 / (n - 1)
    interior = (pts > 0).all(1) & (pts < 1).all(1)
    pts[interior] += rng.uniform(-jitter * h, jitter * h, size=(interior.sum(), 2))
    z = (pts[:, 0] + 1j * pts[:, 1]) * rng.uniform(0.5, 3.0) * np.exp(1j * rng.uniform(0, 2 * np.pi))
    z += complex(*rng.normal(size=2))
    faces = []
    for i in range(n - 1):
        for j in range(n - 1):
            a, b, c, d = i * n + j, i * n + j + 1, (i + 1) * n + j + 1, (i + 1) * n + j
            faces += [[a, b, c], [a, c, d]] if rng.random() < 0.5 else [[a, b, d], [b, c, d]]
    return TriangleMesh(z, faces)


mesh_seeds = st.integers(min_value=0, max_value=2**31 - 1)


def full_boundary(mesh: TriangleMesh, fn):
    bi = np.concatenate(mesh.boundary_loops)
    return make_constraints(mesh, bi, fn(mesh.vertices[bi]), full_boundary=True)


def two_face_mesh() -> TriangleMesh:
    # unit square split along its diagonal: equal areas, one shared edge
    return TriangleMesh([0, 1, 1 + 1j, 1j], [[0, 1, 2], [0, 2, 3]])


@pytest.fixture(scope="session")
def disk():
    return disk_mesh(2048)


@pytest.fixture(scope="session")
def small_disk():
    return disk_mesh(150)


@pytest.fixture(scope="session")
def disk8k():
    return disk_mesh(8192)


@pytest.fixture(scope="session")
def annulus():
    return annulus_mesh(1024)


@pytest.fixture
def triangle():
    return TriangleMesh([0, 1, 1j], [[0, 1, 2]])
