"""Equilibrated a posteriori error estimation for curl-curl problems.

Arbitrary-order Nedelec discretizations of the magnetostatic curl-curl
problem on tetrahedral meshes, with edge-patch equilibrated flux error
estimators computed either through patchwise mixed problems or through an
elementwise sweep, and verification oracles for both routes.
"""

from .cases import (
    ExactSolution,
    cube_solution,
    generate_cube,
    generate_lshape,
    lshape_solution,
    polynomial_solution,
)
from .equilibration import (
    CutoffConstants,
    EstimatorReport,
    PatchEstimate,
    PatchProblem,
    compatibility_check,
    cutoff_constants,
    estimate,
    estimate_edge,
    patch_equilibrate,
    project_source,
    sweep_equilibrate,
)
from .mesh import (
    TAG_DIRICHLET,
    TAG_INTERIOR,
    TAG_NEUMANN,
    EdgePatch,
    Mesh,
    MeshFormatError,
    build_mesh,
    dorfler_mark,
    edge_patch,
    read_mesh,
    uniform_refine,
    write_mesh,
)
from .oracles import (
    BoundCheck,
    StabilityExperiment,
    bound_check,
    prager_synge_flux,
    residual_dual_norm,
    stability_experiment,
)
from .solver import CurlCurlProblem, SolveResult, energy_error, solve
from .spaces import (
    LAGRANGE,
    NEDELEC,
    RAVIART_THOMAS,
    DiscreteField,
    DofSpace,
    basis_eval,
    edge_function,
)

__version__ = "0.1.0"

__all__ = [
    "BoundCheck",
    "CurlCurlProblem",
    "CutoffConstants",
    "DiscreteField",
    "DofSpace",
    "EdgePatch",
    "EstimatorReport",
    "ExactSolution",
    "LAGRANGE",
    "Mesh",
    "MeshFormatError",
    "NEDELEC",
    "PatchEstimate",
    "PatchProblem",
    "RAVIART_THOMAS",
    "SolveResult",
    "StabilityExperiment",
    "TAG_DIRICHLET",
    "TAG_INTERIOR",
    "TAG_NEUMANN",
    "basis_eval",
    "bound_check",
    "build_mesh",
    "compatibility_check",
    "cube_solution",
    "cutoff_constants",
    "dorfler_mark",
    "edge_function",
    "edge_patch",
    "energy_error",
    "estimate",
    "estimate_edge",
    "generate_cube",
    "generate_lshape",
    "lshape_solution",
    "patch_equilibrate",
    "polynomial_solution",
    "prager_synge_flux",
    "project_source",
    "read_mesh",
    "residual_dual_norm",
    "solve",
    "stability_experiment",
    "sweep_equilibrate",
    "uniform_refine",
    "write_mesh",
    "__version__",
]
