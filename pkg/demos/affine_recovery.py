"""Recover a known affine Teichmueller map from its boundary values.

The map w = z + 0.3 conj(z) has constant Beltrami coefficient 0.3 and zero
energy gap, so the solver should land on it within a couple of iterations.
"""
import numpy as np

from tqc import make_testcase, run

case = make_testcase("affine", 2048)
print(f"disk mesh: {case.mesh.n_vertices} vertices, {case.mesh.n_faces} faces")

result = run(case.mesh, case.constraints)
for rec in result.trace.records:
    print(f"  iter {rec.iter:2d}  gap {rec.energy_gap:.3e}  k {rec.k:.6f}")

print("termination:", result.trace.reason)
print("max |mu - 0.3| over faces:", float(np.abs(result.mu - 0.3).max()))
