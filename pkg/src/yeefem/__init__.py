"""
Mass-lumped second-kind Nedelec elements for 2D Maxwell problems with
explicit leapfrog time stepping and algebraic reduction to a Yee-like scheme.
"""
from .assembly import (
    BlockDiagMatrix,
    assemble_boundary_load,
    assemble_consistent_mass,
    assemble_lumped_mass,
    assemble_stiffness,
    assemble_volume_load,
    invert_block_mass,
)
from .bench import (
    ConvergenceRow,
    cfl_table,
    compare_methods,
    convergence_study,
    error_norm,
    export_snapshot,
    transfer_coarse_to_fine,
)
from .exceptions import *  # noqa: F403
from .femcore import DofMap, build_dofmap, eval_field, interpolate, l2_error
from .mesh import (
    MaterialField,
    Mesh,
    ScattererGeometry,
    classify_reduced_edges,
    generate_scatterer_mesh,
    read_mesh,
    refine_uniform,
    write_mesh,
)
from .reduction import build_projection_matrices, reduce_system
from .scenario import Scenario
from .timestep import (
    Simulation,
    SolutionRecord,
    TimeStepState,
    discrete_energy,
    estimate_tau_max,
    run,
    step_full,
    step_reduced,
)

__version__ = "0.1.0"
