"""Adaptive elementwise grad-div penalty finite element solvers for Stokes and
Navier-Stokes flow on triangular meshes."""

__version__ = "0.1.0"

from .cases import CASE_NAMES, CaseSpec, ExactSolution, get_case, manufactured_nse_case
from .diagnostics import (
    ErrorReport,
    convergence_rates,
    discrete_dual_norm,
    error_norms,
    monotonicity_lipschitz_check,
    stability_check,
)
from .fem import DiscreteField, FunctionSpace, QuadratureRule, build_space, interpolate, quadrature_rule
from .mesh import Mesh, MeshError, MeshStats, generate_channel_cylinder_mesh, generate_offset_annulus_mesh, generate_rectangle_mesh, import_mesh
from .solvers import (
    AdaptiveConfig,
    ConvergenceError,
    SolveReport,
    TimeConfig,
    compute_loc_tol,
    element_div_estimator,
    run_nse_ep,
    solve_constant_penalty,
    solve_coupled_stokes,
    solve_ep_stokes,
    solve_pp_stokes,
    update_epsilon,
)
from .system import PenaltyState, SolverError, SparseSystem

__all__ = [name for name in dir() if not name.startswith("_")]
