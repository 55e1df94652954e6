"""Equal-order Stokes eigenvalue solver with local projection stabilization.

Meshes of the unit square, P1 and P2+bubble elements, sparse assembly,
shift-invert subspace iteration for the smallest eigenpairs, and
two-grid / two-space Rayleigh-quotient postprocessing.
"""

from .assembly import BlockSystem, assemble_blocks, assemble_load, assemble_source_rhs, form_eval, triple_norm
from .eigensolver import EigenPair, eig_residual, infsup_global, rayleigh_quotient, solve_smallest
from .errors import (ConvergenceError, DimensionMismatchError, InvalidArgumentError, OutOfDomainError,
                     SingularMatrixError, StokesLPSError, StudyAbortedError, UnsupportedDegreeError)
from .linsolve import Factorization, factorize, solve
from .mesh import Mesh, locate_point, mesh_size, refine_uniform, unit_square_mesh
from .postprocess import PostprocessedPair, expansion_check, postprocess, solve_source_enriched
from .quadrature import QuadratureRule, rule_for_degree
from .spaces import DofMap, ElementKind, FeFunction, ProjectionKind, build_space, interpolate_nodal
from .study import ConvergenceTable, StudyConfig, export_outputs, observed_orders, run_study

__version__ = "0.1.0"
