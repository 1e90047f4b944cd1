"""
A plane wave hitting a lossy disk
=================================

Runs the leapfrog scheme with the full space (NC1) and with one dof on all
edges away from the conductor boundary (N0plus), then compares the two
fields and writes one snapshot for a viewer.
"""

from pathlib import Path

import numpy as np

from yeefem import Scenario, export_snapshot, run
from yeefem.femcore import eval_field

scenario = Scenario()
records = {}
for method in ("NC1", "N0plus"):
    rec = run(scenario, method, level=1, cfl_safety=0.28)
    records[method] = rec
    print(f"{method}: {rec.dofmap.n_reduced} dofs, tau = {rec.tau:.5f}, "
          f"{rec.n_steps} steps to t = {rec.final_time:.3f}")

# %%
# The boundary load injects the incoming wave, so the energy grows while
# the pulse enters the domain.
energy = records["NC1"].energy
t = np.array(energy.times)
total = energy.total
for k in np.linspace(0, len(t) - 1, 6).astype(int):
    print(f"t = {t[k]:.3f}  energy = {total[k]:.5f}")

# %%
# Point values of both solutions at the last snapshot.
points = np.array([[0.0, 0.0], [0.5, 0.5], [-0.6, 0.2]])
for method, rec in records.items():
    values = eval_field(rec.snapshot(2.5), rec.mesh, rec.dofmap, points)
    print(method, np.array2string(values, precision=4))

out = Path("scattering_t2.5.vtk")
export_snapshot(records["N0plus"], 2.5, out, format="vtk")
print(f"wrote {out}")
