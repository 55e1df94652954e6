"""Eigenvalue postprocessing by one auxiliary Stokes source solve.

Given a discrete eigenpair (lam_h, u_h, p_h), solve the stabilized Stokes
problem with load ``lam_h * u_h`` on an enriched space and take the
Rayleigh quotient of the resulting velocity. The enriched space is either
the same element on a uniformly refined mesh ("two-grid") or the
P2Bubble/PDisc1 pair on the same mesh ("two-space").
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import linsolve
from .assembly import BlockSystem, assemble_blocks, assemble_source_rhs, form_eval
from .eigensolver import EigenPair, augmented_matrices, rayleigh_quotient
from .errors import DimensionMismatchError, InvalidArgumentError
from .mesh import Mesh, mesh_size, refine_uniform
from .spaces import ElementKind, FeFunction, ProjectionKind

MODES = ("two-grid", "two-space")


@dataclass(frozen=True, eq=False)
class PostprocessedPair:
    lambda_tilde: float
    u_tilde: FeFunction
    p_tilde: FeFunction
    mode: str
    extra_levels: int  # refinement depth for two-grid, 0 for two-space
    source_residual: float
    system: BlockSystem
    source_time: float = 0.0  # wall time of factorization + solve
    setup_time: float = 0.0  # wall time of refinement + assembly


def solve_stokes_source(sys: BlockSystem, rhs_u):
    """Solve the stabilized, mean-constrained Stokes system for a velocity load vector.

    ``rhs_u`` lives on the free velocity DOFs (as from ``assemble_load``).
    Returns ``(u, p, relative_residual)``.
    """
    rhs_u = np.asarray(rhs_u, dtype=float)
    if rhs_u.shape != (sys.n_u,):
        raise DimensionMismatchError(f"velocity load has shape {rhs_u.shape}, expected ({sys.n_u},)")
    K, _ = augmented_matrices(sys)
    b = np.zeros(K.shape[0])
    b[:sys.n_u] = rhs_u
    x = linsolve.solve(linsolve.factorize(K), b)
    res = linsolve.relative_residual(K, x, b)
    n_u, n_p = sys.n_u, sys.n_p
    return sys.velocity_function(x[:n_u]), sys.pressure_function(x[n_u:n_u + n_p]), res


def solve_source_enriched(enriched_sys: BlockSystem, enriched_mesh: Mesh, pair: EigenPair):
    """Solve the stabilized source problem with load ``pair.lam * pair.u``.

    Returns ``(u_tilde, p_tilde, relative_residual)``. The pressure has
    zero mean.
    """
    rhs_u = assemble_source_rhs(enriched_sys, enriched_mesh, pair.u, pair.lam)
    return solve_stokes_source(enriched_sys, rhs_u)


def auto_two_grid_levels(mesh: Mesh, max_levels: int = 4) -> int:
    """Smallest refinement depth with h * 2**-l <= h**2, capped at ``max_levels``."""
    h = mesh_size(mesh)
    needed = max(1, math.ceil(math.log2(1.0 / h) - 1e-12))
    return min(needed, max_levels)


def postprocess(pair: EigenPair, coarse_sys: BlockSystem, mode: str = "two-space",
                levels: int | None = None, max_levels: int = 4) -> PostprocessedPair:
    """Improve ``pair`` (computed on ``coarse_sys``) by one enriched source solve.

    For ``mode="two-grid"``, ``levels`` uniform refinements are used
    (``None`` picks the depth giving mesh size about h**2). For
    ``mode="two-space"`` the coarse system must be P1 with zero projection.
    """
    if mode not in MODES:
        raise InvalidArgumentError(f"postprocess mode must be one of {MODES}, got {mode!r}")
    if pair.u.dofmap is not coarse_sys.space:
        raise InvalidArgumentError("eigenpair does not belong to the coarse system")
    t0 = time.perf_counter()
    if mode == "two-grid":
        if levels is None:
            levels = auto_two_grid_levels(coarse_sys.mesh, max_levels)
        if levels < 1:
            raise InvalidArgumentError(f"two-grid postprocessing needs at least one refinement, got {levels}")
        mesh = coarse_sys.mesh
        for _ in range(levels):
            mesh = refine_uniform(mesh)
        enriched = assemble_blocks(mesh, coarse_sys.element, proj=coarse_sys.projection,
                                   alpha0=coarse_sys.alpha0, alpha_scaling=coarse_sys.alpha_scaling)
    else:
        if coarse_sys.element is not ElementKind.P1 or not coarse_sys.projection.is_zero:
            raise InvalidArgumentError("two-space postprocessing starts from P1 elements with zero projection")
        levels = 0
        mesh = coarse_sys.mesh
        enriched = assemble_blocks(mesh, ElementKind.P2_BUBBLE, proj=ProjectionKind.pdisc(1),
                                   alpha0=coarse_sys.alpha0, alpha_scaling=coarse_sys.alpha_scaling)
    t1 = time.perf_counter()
    u_t, p_t, res = solve_source_enriched(enriched, mesh, pair)
    t2 = time.perf_counter()
    lam_t = rayleigh_quotient(enriched, u_t)
    return PostprocessedPair(lam_t, u_t, p_t, mode, levels, res, enriched, t2 - t1, t1 - t0)


@dataclass(frozen=True)
class ExpansionCheck:
    lhs: float  # a(w, w) / r(w, w) - lam_h
    rhs: float
    defect: float
    lambda_hat: float
    orthogonality_defect: float  # b(w, psi) + S(psi, psi)


def expansion_check(sys: BlockSystem, pair: EigenPair, w: FeFunction, psi: FeFunction) -> ExpansionCheck:
    """Check the Rayleigh-quotient error expansion around a discrete eigenpair.

    With (u, p, lam) = pair and R = b(w, psi) + S(psi, psi),

        a(w,w)/r(w,w) - lam = [a(w-u, w-u) - lam r(w-u, w-u) + 2 b(w-u, p-psi)
                               - S(p-psi, p-psi) - S(psi, psi) + 2 R] / r(w, w)

    holds exactly for any discrete (w, psi). Returns both sides and their difference.
    """
    rww = form_eval(sys, "r", w, w)
    if rww <= 0.0:
        raise InvalidArgumentError("expansion check needs a nonzero velocity w")
    lam = pair.lam
    e = FeFunction(w.dofmap, 2, w.coefficients - pair.u.coefficients)
    d = FeFunction(psi.dofmap, 1, pair.p.coefficients - psi.coefficients)
    orth = form_eval(sys, "b", w, psi) + form_eval(sys, "S", psi, psi)
    numer = (form_eval(sys, "a", e, e) - lam * form_eval(sys, "r", e, e) + 2.0 * form_eval(sys, "b", e, d)
             - form_eval(sys, "S", d, d) - form_eval(sys, "S", psi, psi) + 2.0 * orth)
    lam_hat = form_eval(sys, "a", w, w) / rww
    lhs = lam_hat - lam
    rhs = numer / rww
    return ExpansionCheck(lhs, rhs, lhs - rhs, lam_hat, orth)
