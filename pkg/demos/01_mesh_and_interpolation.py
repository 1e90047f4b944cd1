"""
Meshes, edge elements and interpolation
=======================================

The scattering benchmark lives on the square (-1, 1)^2 with a lossy disk
of radius 0.3, approximated by a regular 16-gon.  This script builds the
mesh hierarchy, looks at the two-dofs-per-edge space and measures how fast
the canonical interpolants converge.
"""

import numpy as np

from yeefem import Scenario, build_dofmap, interpolate, l2_error
from yeefem.mesh import classify_reduced_edges, generate_scatterer_mesh, refine_uniform

scenario = Scenario()
mesh = generate_scatterer_mesh(scenario.geometry, level=0)
print(f"level 0: {mesh.n_vertices} vertices, {mesh.n_edges} edges, "
      f"{mesh.n_triangles} triangles, h = {mesh.h():.4f}")
print(f"interface edges: {len(mesh.interface_edges())}, "
      f"boundary edges: {len(mesh.boundary_edges)}")

# Every edge carries two dofs, Phi_ij = lambda_i grad(lambda_j) and
# Phi_ji = -lambda_j grad(lambda_i).  Reducing an edge ties the two together,
# which leaves the usual lowest-order Nedelec function on that edge.
mat = scenario.materials(mesh)
for mode in ("none", "A5", "all"):
    dm = build_dofmap(mesh, classify_reduced_edges(mesh, mat, mode))
    print(f"reduction {mode:>4}: {dm.n_reduced} of {dm.n_full} dofs kept")

# %%
# Interpolating a smooth field: the full space is second order in L2, the
# reduced spaces first order.


def field(x, t):
    return np.stack([np.sin(3 * x[:, 1]) * np.exp(x[:, 0]),
                     np.cos(2 * x[:, 0] * x[:, 1])], axis=1)


previous = None
for level in range(3):
    mat = scenario.materials(mesh)
    full = build_dofmap(mesh)
    red = build_dofmap(mesh, classify_reduced_edges(mesh, mat, "all"))
    e_full = l2_error(interpolate(field, 0.0, mesh, full), field, 0.0, mesh, full)
    e_red = l2_error(interpolate(field, 0.0, mesh, red, mode="reduced"), field, 0.0, mesh, red)
    line = f"level {level}: full {e_full:.3e}  reduced {e_red:.3e}"
    if previous is not None:
        line += (f"  rates {np.log2(previous[0] / e_full):.2f}, "
                 f"{np.log2(previous[1] / e_red):.2f}")
    print(line)
    previous = (e_full, e_red)
    mesh = refine_uniform(mesh)
