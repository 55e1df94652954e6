"""Sparse assembly of the stabilized equal-order Stokes blocks.

Velocity unknowns are ordered component-major over the interior scalar
DOFs: ``[u_x(free), u_y(free)]``. Pressure unknowns cover every scalar DOF;
the zero-mean condition is imposed later through the vector ``c``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import DimensionMismatchError, InvalidArgumentError
from .mesh import Mesh, ancestor_cells, barycentric_coordinates
from .quadrature import DEFAULT_RULE, QuadratureRule
from .spaces import (DofMap, ElementKind, FeFunction, ProjectionKind, build_space,
                     eval_basis, evaluate_cells, fluctuation_matrix, gradients_cells)

ALPHA_SCALINGS = ("h2", "constant")


@dataclass(frozen=True, eq=False)
class BlockSystem:
    mesh: Mesh
    space: DofMap  # shared by each velocity component and the pressure
    projection: ProjectionKind
    alpha0: float
    alpha_scaling: str
    A: sp.csr_matrix  # n_u x n_u
    B: sp.csr_matrix  # n_p x n_u, B[i, j] = int div(phi_j) psi_i
    S: sp.csr_matrix  # n_p x n_p
    M: sp.csr_matrix  # n_u x n_u
    c: np.ndarray  # n_p, c_i = int psi_i
    mass_scalar: sp.csr_matrix  # full scalar mass (pressure L2 inner product)
    stiffness_scalar: sp.csr_matrix  # full scalar stiffness
    free: np.ndarray = field(repr=False)  # interior scalar dofs

    @property
    def element(self) -> ElementKind:
        return self.space.element

    @property
    def level(self) -> int:
        return self.mesh.level

    @property
    def n_u(self) -> int:
        return 2 * len(self.free)

    @property
    def n_p(self) -> int:
        return self.space.n_dofs

    def restrict_velocity(self, u: FeFunction) -> np.ndarray:
        _check_space(self, u, 2)
        return u.component_coefficients()[:, self.free].ravel()

    def velocity_function(self, reduced) -> FeFunction:
        reduced = np.asarray(reduced, dtype=float)
        if reduced.shape != (self.n_u,):
            raise DimensionMismatchError(f"velocity vector needs length {self.n_u}, got {reduced.shape}")
        full = np.zeros((2, self.space.n_dofs))
        full[:, self.free] = reduced.reshape(2, -1)
        return FeFunction(self.space, 2, full.ravel())

    def pressure_vector(self, p: FeFunction) -> np.ndarray:
        _check_space(self, p, 1)
        return np.asarray(p.coefficients)

    def pressure_function(self, p) -> FeFunction:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.n_p,):
            raise DimensionMismatchError(f"pressure vector needs length {self.n_p}, got {p.shape}")
        return FeFunction(self.space, 1, p)


def _check_space(sys, f, components):
    if not isinstance(f, FeFunction):
        raise InvalidArgumentError(f"expected an FeFunction, got {type(f).__name__}")
    if f.dofmap is not sys.space and not (
            f.dofmap.mesh is sys.mesh and f.dofmap.element is sys.element):
        raise DimensionMismatchError("function lives on a different space than the block system")
    if f.components != components:
        raise DimensionMismatchError(f"expected {components} component(s), got {f.components}")


def cell_alpha(mesh: Mesh, alpha0: float, scaling: str = "h2") -> np.ndarray:
    if scaling == "h2":
        return alpha0 * mesh.cell_diameters**2
    if scaling == "constant":
        return np.full(mesh.n_cells, float(alpha0))
    raise InvalidArgumentError(f"alpha scaling must be one of {ALPHA_SCALINGS}, got {scaling!r}")


def _scatter(cell_dofs, local, n_rows, n_cols=None, col_dofs=None):
    col_dofs = cell_dofs if col_dofs is None else col_dofs
    rows = np.repeat(cell_dofs, col_dofs.shape[1], axis=1).ravel()
    cols = np.tile(col_dofs, (1, cell_dofs.shape[1])).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n_rows, n_cols or n_rows)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def assemble_blocks(m: Mesh, vel: ElementKind = ElementKind.P1, pres: ElementKind | None = None,
                    proj: ProjectionKind = ProjectionKind.zero(), alpha0: float = 0.1,
                    alpha_scaling: str = "h2", rule: QuadratureRule = DEFAULT_RULE) -> BlockSystem:
    """Assemble A, B, S, M and the mean functional on mesh ``m``.

    ``alpha_K = alpha0 * h_K**2`` by default; ``alpha_scaling="constant"``
    uses ``alpha_K = alpha0``. Dirichlet velocity DOFs are removed.
    """
    pres = vel if pres is None else pres
    if pres is not vel:
        raise InvalidArgumentError("velocity and pressure must use the same element (equal order)")
    if not alpha0 > 0:
        raise InvalidArgumentError(f"stabilization coefficient must be positive, got {alpha0}")
    alpha = cell_alpha(m, alpha0, alpha_scaling)
    space = build_space(m, vel)
    n = space.n_dofs
    dofs = space.cell_dofs

    values, ref_grads = eval_basis(vel, rule.points)  # (nq, nl), (nq, nl, 2)
    grads = np.einsum("ced,qie->cqid", m.inverse_jacobians, ref_grads)  # (nc, nq, nl, 2)
    wdet = 2.0 * np.abs(m.signed_areas)[:, None] * rule.weights[None, :]  # (nc, nq)

    stiff_loc = np.einsum("cq,cqid,cqjd->cij", wdet, grads, grads)
    mass_loc = np.einsum("cq,qi,qj->cij", wdet, values, values)
    stiffness = _scatter(dofs, stiff_loc, n)
    mass = _scatter(dofs, mass_loc, n)

    div_loc = [np.einsum("cq,qi,cqj->cij", wdet, values, grads[..., d]) for d in range(2)]
    free = space.free_dofs
    bx, by = (_scatter(dofs, div_loc[d], n) for d in range(2))
    B = sp.hstack([bx[:, free], by[:, free]], format="csr")

    fluct = fluctuation_matrix(proj, rule)
    kgrads = np.einsum("pq,cqid->cpid", fluct, grads)
    stab_loc = alpha[:, None, None] * np.einsum("cq,cqid,cqjd->cij", wdet, kgrads, kgrads)
    S = _scatter(dofs, stab_loc, n)

    c = np.bincount(dofs.ravel(), weights=np.einsum("cq,qi->ci", wdet, values).ravel(), minlength=n)

    a_free = stiffness[free][:, free]
    m_free = mass[free][:, free]
    A = sp.block_diag([a_free, a_free], format="csr")
    M = sp.block_diag([m_free, m_free], format="csr")
    for mat in (A, B, M):
        mat.sort_indices()
    return BlockSystem(m, space, proj, float(alpha0), alpha_scaling, A, B, S, M, c, mass, stiffness, free)


_FORM_SHAPES = {"a": (2, 2), "r": (2, 2), "b": (2, 1), "S": (1, 1)}


def form_eval(sys: BlockSystem, form: str, x: FeFunction, y: FeFunction) -> float:
    """Evaluate a(x, y), r(x, y), b(x, y) (x velocity, y pressure) or S(x, y)."""
    if form not in _FORM_SHAPES:
        raise InvalidArgumentError(f"unknown form {form!r}; use one of a, b, r, S")
    cx, cy = _FORM_SHAPES[form]
    _check_space(sys, x, cx)
    _check_space(sys, y, cy)
    if form == "a":
        return float(sys.restrict_velocity(x) @ (sys.A @ sys.restrict_velocity(y)))
    if form == "r":
        return float(sys.restrict_velocity(x) @ (sys.M @ sys.restrict_velocity(y)))
    if form == "b":
        return float(y.coefficients @ (sys.B @ sys.restrict_velocity(x)))
    return float(x.coefficients @ (sys.S @ y.coefficients))


def triple_norm(sys: BlockSystem, v: FeFunction, q: FeFunction) -> float:
    """(|v|_1^2 + ||q||_0^2 + S(q, q))^(1/2)."""
    vr = sys.restrict_velocity(v)
    qc = sys.pressure_vector(q)
    val = vr @ (sys.A @ vr) + qc @ (sys.mass_scalar @ qc) + qc @ (sys.S @ qc)
    return float(np.sqrt(max(val, 0.0)))


def assemble_source_rhs(fine_sys: BlockSystem, fine_mesh: Mesh, coarse_u: FeFunction, lam: float,
                        rule: QuadratureRule = DEFAULT_RULE) -> np.ndarray:
    """Load vector ``lam * int coarse_u . v_i`` for the free velocity DOFs of ``fine_sys``.

    ``coarse_u`` may live on ``fine_mesh`` itself or on any refinement
    ancestor; it is evaluated at the fine quadrature points through the
    refinement genealogy.
    """
    if fine_sys.mesh is not fine_mesh:
        raise InvalidArgumentError("fine_mesh must be the mesh of fine_sys")
    if coarse_u.components != 2:
        raise DimensionMismatchError("source term must be a velocity field")
    coarse_mesh = coarse_u.dofmap.mesh
    anc = ancestor_cells(fine_mesh, coarse_mesh)  # raises for non-nested meshes
    x = fine_mesh.map_to_physical(np.arange(fine_mesh.n_cells)[:, None], rule.points[None])
    if coarse_mesh is fine_mesh:
        coarse_bary = np.broadcast_to(rule.points, x.shape[:2] + (3,))
    else:
        coarse_bary = barycentric_coordinates(coarse_mesh, anc[:, None], x)
    uq = evaluate_cells(coarse_u, anc[:, None], coarse_bary)  # (nc, nq, 2)
    values, _ = eval_basis(fine_sys.element, rule.points)
    wdet = 2.0 * np.abs(fine_mesh.signed_areas)[:, None] * rule.weights[None, :]
    local = np.einsum("cq,qi,cqd->dci", wdet, values, uq)
    dofs = fine_sys.space.cell_dofs.ravel()
    n = fine_sys.space.n_dofs
    full = np.stack([np.bincount(dofs, weights=local[d].ravel(), minlength=n) for d in range(2)])
    return lam * full[:, fine_sys.free].ravel()


def assemble_load(sys: BlockSystem, f, rule: QuadratureRule = DEFAULT_RULE) -> np.ndarray:
    """Load vector ``int f . v_i`` on the free velocity DOFs for an analytic ``f(x, y) -> (fx, fy)``."""
    m = sys.mesh
    x = m.map_to_physical(np.arange(m.n_cells)[:, None], rule.points[None])
    fq = np.stack(np.broadcast_arrays(*f(x[..., 0], x[..., 1])), axis=-1)
    values, _ = eval_basis(sys.element, rule.points)
    wdet = 2.0 * np.abs(m.signed_areas)[:, None] * rule.weights[None, :]
    local = np.einsum("cq,qi,cqd->dci", wdet, values, fq)
    dofs = sys.space.cell_dofs.ravel()
    full = np.stack([np.bincount(dofs, weights=local[d].ravel(), minlength=sys.space.n_dofs)
                     for d in range(2)])
    return full[:, sys.free].ravel()


def h1_seminorm_error(u: FeFunction, grad_exact, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """|u - u_exact|_1 where ``grad_exact(x, y)`` returns the 2x2 Jacobian entries
    ``((dux/dx, dux/dy), (duy/dx, duy/dy))``."""
    m = u.dofmap.mesh
    cells = np.arange(m.n_cells)[:, None]
    gh = gradients_cells(u, cells, rule.points[None])  # (nc, nq, 2, 2)
    x = m.map_to_physical(cells, rule.points[None])
    g = np.asarray(grad_exact(x[..., 0], x[..., 1]), dtype=float)  # (2, 2, nc, nq)
    diff = gh - np.moveaxis(g, (0, 1), (2, 3))
    wdet = 2.0 * np.abs(m.signed_areas)[:, None] * rule.weights[None, :]
    return float(np.sqrt(np.einsum("cq,cqij,cqij->", wdet, diff, diff)))


def l2_error(p: FeFunction, exact, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """||p - exact||_0 for a scalar field."""
    m = p.dofmap.mesh
    cells = np.arange(m.n_cells)[:, None]
    ph = evaluate_cells(p, cells, rule.points[None])[..., 0]
    x = m.map_to_physical(cells, rule.points[None])
    diff = ph - exact(x[..., 0], x[..., 1])
    wdet = 2.0 * np.abs(m.signed_areas)[:, None] * rule.weights[None, :]
    return float(np.sqrt(np.sum(wdet * diff**2)))


def dump_matrix_market(sys: BlockSystem, directory) -> list[Path]:
    """Write A, B, S, M as MatrixMarket coordinate files (A.mtx, ...) and c as c.mtx."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, mat in (("A", sys.A), ("B", sys.B), ("S", sys.S), ("M", sys.M),
                      ("c", sp.csr_matrix(sys.c[:, None]))):
        path = directory / f"{name}.mtx"
        try:
            scipy.io.mmwrite(str(path), mat.tocoo(), field="real", precision=17)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        paths.append(path)
    return paths
