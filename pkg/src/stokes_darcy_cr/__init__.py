"""Nonconforming Crouzeix-Raviart mixed finite elements for coupled
Stokes-Darcy flow with Beavers-Joseph-Saffman interface conditions."""
from .assembly import (AssemblyError, MaterialParams, SourceData, SystemBlocks, assemble_divergence,
                       assemble_jump_penalty, assemble_norm_gram, assemble_rhs, assemble_stiffness,
                       assemble_system, jump_energy)
from .mesh import EdgeClass, Geometry, Mesh, MeshError, Region, build_structured_mesh, classify_edges, \
    mesh_from_triangles, mesh_statistics
from .solver import (ConvergenceFailure, InfSupError, SaddleSolution, SingularSystemError, SolverError,
                     estimate_coercivity, estimate_inf_sup, solve_saddle)
from .space import DiscreteVelocity, DofMap, build_dof_map, cr_interpolate, discrete_divergence, eval_velocity
from .verification import (ConvergenceTable, ErrorReport, ExactCase, compute_error_norms, manufactured_case,
                           run_convergence_study)

__version__ = "0.1.0"
