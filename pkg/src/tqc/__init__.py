"""Extremal Teichmueller maps between planar triangle meshes by quasi-conformal iteration."""
from .beltrami import (
    DegenerateMapError,
    DilationStats,
    auxiliary_beltrami,
    beltrami_of_map,
    clamp_modulus,
    dilation_stats,
    laplacian_smooth,
    project_constant_modulus,
    read_field_csv,
    relative_beltrami,
    write_field_csv,
)
from .diagnostics import DiagnosticsReport, compute_diagnostics, read_report, write_report
from .energy import EnergyReport, energy_gap, harmonic_energy, lower_bound_check
from .generators import TESTCASES, annulus_mesh, disk_mesh, make_testcase, write_testcase
from .iteration import (
    FoldError,
    IterationTrace,
    SolveResult,
    SolverParams,
    initialize,
    qc_step,
    read_trace,
    run,
    write_trace,
)
from .lbs import LbsError, LbsSystem, assemble, residual_energy, solve
from .mesh import (
    ConstraintError,
    ConstraintSet,
    MeshError,
    TriangleMesh,
    boundary_loops,
    jacobians,
    load_constraints,
    load_mesh,
    make_constraints,
    save_constraints,
    save_mesh,
    save_off,
    wirtinger_derivatives,
)

__version__ = "0.1.0"
