"""Weighted Steklov p-eigenvalues on 2-D outward cuspidal domains.

Finite element discretization of the p-Dirichlet energy with a weighted
boundary p-norm, constrained Rayleigh-quotient minimization for the first
non-trivial eigenvalue, and the supporting numerical experiments
(Friedrichs-Poincare constants, trace-map spectra, alpha sweeps).
"""

from .analysis import SweepReport, SweepRow, alpha_sweep, fp_constant, trace_spectrum
from .eigensolver import (EigenResult, orthogonalize_shift, rayleigh, solve_p,
                          solve_p2, steklov_p2_spectrum, weakform_residual)
from .fem import (ProblemConfig, assemble_p2, boundary_pnorm, constraint_functional,
                  energy, energy_gradient, volume_pnorm)
from .geometry import (BoundaryArc, BoundaryPolygon, BoundaryTag, DomainSpec,
                       GeometryError, boundary_arcs, boundary_polygon,
                       boundary_weight, cusp_cap_intersection, cusp_halfwidth,
                       polygon_from_points)
from .linalg import SolveError, SparseSym, generalized_eig_sym, solve_spd
from .mesh import Mesh, boundary_weighted_length, mesh_area, refine_uniform, triangulate

__all__ = [
    "SweepReport", "SweepRow", "alpha_sweep", "fp_constant", "trace_spectrum",
    "EigenResult", "orthogonalize_shift", "rayleigh", "solve_p", "solve_p2",
    "steklov_p2_spectrum", "weakform_residual",
    "ProblemConfig", "assemble_p2", "boundary_pnorm", "constraint_functional",
    "energy", "energy_gradient", "volume_pnorm",
    "BoundaryArc", "BoundaryPolygon", "BoundaryTag", "DomainSpec",
    "GeometryError", "boundary_arcs", "boundary_polygon", "boundary_weight",
    "cusp_cap_intersection", "cusp_halfwidth", "polygon_from_points",
    "SolveError", "SparseSym", "generalized_eig_sym", "solve_spd",
    "Mesh", "boundary_weighted_length", "mesh_area", "refine_uniform", "triangulate",
]

__version__ = "0.1.0"
