import math

import numpy as np
import pytest

from conftest import full_boundary
from tqc import iteration as it
from tqc.beltrami import beltrami_of_map, project_constant_modulus
from tqc.energy import energy_gap
from tqc.generators import affine_map, disk_mesh, make_testcase
from tqc.iteration import (
    FoldError,
    IterationTrace,
    SolverParams,
    TraceRecord,
    initialize,
    qc_step,
    read_trace,
    run,
    update_field,
    write_trace,
)
from tqc.lbs import lbs
from tqc.mesh import ConstraintError, make_constraints


@pytest.fixture(scope="module")
def affine_case(disk):
    return disk, full_boundary(disk, lambda z: affine_map(z, 1, 0.3))


@pytest.fixture(scope="module")
def small_landmarks():
    case = make_testcase("landmarks", 1024)
    return case.mesh, case.constraints


class TestParams:
    @pytest.mark.parametrize(
        "kw",
        [
            {"variant": "other"},
            {"alpha": 0.0},
            {"alpha": 1.5},
            {"smooth_lambda": 0.0},
            {"smooth_passes": 0},
            {"max_iter": 0},
            {"tol_mu": 0.0},
            {"tol_gap": -1.0},
            {"mu_cap": 1.0},
            {"order": "sideways"},
        ],
    )
    def test_bounds(self, kw):
        with pytest.raises(ValueError):
            SolverParams(**kw)

    def test_defaults(self):
        p = SolverParams()
        assert (p.variant, p.alpha, p.smooth_lambda, p.smooth_passes) == ("simplified", 1.0, 0.5, 1)
        assert (p.max_iter, p.tol_mu, p.tol_gap, p.mu_cap, p.monotone_guard) == (500, 1e-6, 1e-8, 0.9999, True)


class TestInitialize:
    def test_identity(self, disk):
        f0, mu0 = initialize(disk, full_boundary(disk, lambda z: z))
        assert np.abs(f0 - disk.vertices).max() < 1e-9
        assert not mu0.any()

    def test_affine_is_harmonic(self, affine_case):
        mesh, cons = affine_case
        f0, _ = initialize(mesh, cons)
        assert np.abs(f0 - affine_map(mesh.vertices, 1, 0.3)).max() < 1e-9

    def test_landmark_conflict(self, disk):
        bi = disk.boundary_loops[0]
        with pytest.raises(ConstraintError, match="duplicate"):
            make_constraints(disk, bi, disk.vertices[bi], [0, 0], [0j, 0.1j])


class TestStep:
    @pytest.mark.parametrize("variant", ["simplified", "full"])
    @pytest.mark.parametrize("order", ["project_last", "smooth_last"])
    def test_affine_fixed_point(self, affine_case, variant, order):
        mesh, cons = affine_case
        state = (affine_map(mesh.vertices, 1, 0.3), np.full(mesh.n_faces, 0.3 + 0j))
        f1, mu1 = qc_step(mesh, cons, SolverParams(variant=variant, order=order), state)
        assert np.abs(f1 - state[0]).max() < 1e-9
        assert np.abs(mu1 - state[1]).max() < 1e-9

    def test_identity_stays(self, disk):
        cons = full_boundary(disk, lambda z: z)
        f1, mu1 = qc_step(disk, cons, SolverParams(), initialize(disk, cons))
        assert np.abs(f1 - disk.vertices).max() < 1e-9
        assert np.abs(mu1).max() < 1e-9

    def test_first_step_does_not_raise_gap(self, affine_case):
        mesh, cons = affine_case
        f0, mu0 = initialize(mesh, cons)
        g0 = energy_gap(mesh, f0, mu0, cons.target_area).energy_gap
        _, mu1 = qc_step(mesh, cons, SolverParams(), (f0, mu0))
        f1 = lbs(mesh, mu1, cons)
        assert energy_gap(mesh, f1, mu1, cons.target_area).energy_gap <= g0

    def test_update_field_orders(self, small_landmarks):
        mesh, cons = small_landmarks
        f0, mu0 = initialize(mesh, cons)
        a = update_field(mesh, f0, mu0, SolverParams())
        b = update_field(mesh, f0, mu0, SolverParams(order="smooth_last"))
        mod = np.abs(a)
        assert mod.std() < 1e-12
        assert np.abs(b).std() > 1e-6  # smoothing after projection breaks constant modulus
        raw = beltrami_of_map(mesh, f0)
        assert np.abs(a - project_constant_modulus(mesh, a)).max() < 1e-12
        assert np.abs(np.abs(a) - np.abs(raw).dot(mesh.face_areas) / mesh.area).max() < 0.05

    def test_full_variant_uses_relative_coefficient(self, small_landmarks):
        mesh, cons = small_landmarks
        f0, mu0 = initialize(mesh, cons)
        # from mu = 0 both variants see the same raw field
        a = update_field(mesh, f0, mu0, SolverParams())
        b = update_field(mesh, f0, mu0, SolverParams(variant="full"))
        assert np.abs(a - b).max() < 1e-14


class TestRun:
    def test_identity(self, disk):
        res = run(disk, full_boundary(disk, lambda z: z))
        assert res.converged and res.trace.records[-1].iter <= 1
        assert res.report.energy_gap <= 1e-10 * disk.area
        assert np.abs(res.mu).max() <= 1e-6

    @pytest.mark.parametrize("variant", ["simplified", "full"])
    def test_affine(self, affine_case, variant):
        mesh, cons = affine_case
        res = run(mesh, cons, SolverParams(variant=variant))
        assert res.converged
        assert np.abs(res.mu - 0.3).max() <= 1e-3
        assert res.report.energy_gap <= 1e-6 * res.trace.records[0].energy_gap

    def test_affine_smooth_last(self, affine_case):
        mesh, cons = affine_case
        res = run(mesh, cons, SolverParams(order="smooth_last"))
        assert res.converged and np.abs(res.mu - 0.3).max() <= 1e-3

    def test_landmark_invariants(self, small_landmarks):
        mesh, cons = small_landmarks
        params = SolverParams(max_iter=25)
        res = run(mesh, cons, params)
        recs = res.trace.records
        assert [r.iter for r in recs] == list(range(len(recs)))
        assert math.isnan(recs[0].step_inf)
        gap0 = recs[0].energy_gap
        for a, b in zip(recs, recs[1:]):
            assert b.energy_gap <= a.energy_gap + 1e-9 * gap0
        for r in recs:
            assert r.energy_gap >= -1e-9 * (r.energy_gap + res.report.target_area)
            assert r.mu_std <= 1e-9
        assert np.array_equal(res.map[cons.index], cons.target)
        assert np.abs(res.mu).max() <= params.mu_cap
        # returned pair matches the last row exactly
        assert energy_gap(mesh, res.map, res.mu, cons.target_area).energy_gap == recs[-1].energy_gap
        assert res.trace.reason in ("converged", "max_iter", "stalled")

    def test_deterministic(self, tmp_path, small_landmarks):
        mesh, cons = small_landmarks
        a = run(mesh, cons, SolverParams(max_iter=5))
        b = run(mesh, cons, SolverParams(max_iter=5))
        write_trace(tmp_path / "a.csv", a.trace)
        write_trace(tmp_path / "b.csv", b.trace)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert np.array_equal(a.map, b.map) and np.array_equal(a.mu, b.mu)

    def test_max_iter_reason(self, small_landmarks):
        mesh, cons = small_landmarks
        res = run(mesh, cons, SolverParams(max_iter=2, tol_mu=1e-12, tol_gap=1e-15))
        assert res.trace.reason in ("max_iter", "stalled")
        assert len(res.trace) <= 3

    def test_guard_retry_then_stall(self, small_landmarks, monkeypatch):
        mesh, cons = small_landmarks
        calls = []
        real = it.update_field

        def spoiled(mesh_, f, mu, params, passes=None, alpha=None):
            calls.append(passes)
            out = real(mesh_, f, mu, params, passes=passes, alpha=alpha)
            # rotate every argument so the next solve is far worse
            return out * np.exp(1j * np.linspace(0, 6, out.size)) if len(calls) > 1 else out

        monkeypatch.setattr(it, "update_field", spoiled)
        res = run(mesh, cons, SolverParams())
        assert res.trace.reason == "stalled"
        # first step accepted; second step tried with 1 then 2 passes and both rejected
        assert calls == [1, 1, 2]
        assert len(res.trace.records) == 2 and len(res.trace.rejected) == 2
        assert res.trace.records[-1].energy_gap <= res.trace.records[0].energy_gap

    def test_guard_full_variant_halves_alpha(self, small_landmarks, monkeypatch):
        mesh, cons = small_landmarks
        alphas = []
        real = it.update_field

        def spy(mesh_, f, mu, params, passes=None, alpha=None):
            alphas.append(alpha)
            out = real(mesh_, f, mu, params, passes=passes, alpha=alpha)
            return -out if len(alphas) > 1 else out

        monkeypatch.setattr(it, "update_field", spy)
        res = run(mesh, cons, SolverParams(variant="full", alpha=0.8))
        assert alphas == [0.8, 0.8, 0.4] and res.trace.reason == "stalled"

    def test_unguarded_accepts_increase(self, small_landmarks, monkeypatch):
        mesh, cons = small_landmarks
        real = it.update_field
        count = []

        def spoiled(*a, **k):
            count.append(1)
            out = real(*a, **k)
            return -out if len(count) == 2 else out

        monkeypatch.setattr(it, "update_field", spoiled)
        res = run(mesh, cons, SolverParams(monotone_guard=False, max_iter=3))
        gaps = res.trace.gaps
        assert np.any(np.diff(gaps) > 0) and not res.trace.rejected

    def test_fold_limit(self, small_landmarks, monkeypatch):
        mesh, cons = small_landmarks
        monkeypatch.setattr(it, "FOLD_LIMIT", -1.0)
        with pytest.raises(FoldError):
            run(mesh, cons)

    def test_fold_warning(self):
        mesh = disk_mesh(600)
        bi = mesh.boundary_loops[0]
        interior = np.setdiff1d(np.arange(mesh.n_vertices), bi)
        v = interior[np.argmin(np.abs(mesh.vertices[interior] - 0.5))]
        # drag one landmark across its neighbours: a few faces fold
        cons = make_constraints(mesh, bi, mesh.vertices[bi], [v], [mesh.vertices[v] + 0.25])
        res = run(mesh, cons, SolverParams(max_iter=1))
        assert any("folded" in w for w in res.trace.warnings)
        assert res.trace.records[0].folded > 0


class TestTrace:
    def test_append_order(self):
        t = IterationTrace()
        t.append(TraceRecord(0, 1.0, 0.0, 0.0, float("nan"), 1.0))
        with pytest.raises(ValueError):
            t.append(TraceRecord(0, 1.0, 0.0, 0.0, 0.0, 1.0))

    def test_csv_roundtrip(self, tmp_path, small_landmarks):
        mesh, cons = small_landmarks
        res = run(mesh, cons, SolverParams(max_iter=3))
        p = tmp_path / "t.csv"
        write_trace(p, res.trace)
        assert p.read_text().splitlines()[0] == "iter,energy_gap,k,mu_std,step_inf,min_jacobian"
        rows = read_trace(p)
        for row, rec in zip(rows, res.trace.records):
            for key in ("iter", "energy_gap", "k", "mu_std", "min_jacobian"):
                assert row[key] == getattr(rec, key)
            assert row["step_inf"] == rec.step_inf or (math.isnan(row["step_inf"]) and math.isnan(rec.step_inf))
