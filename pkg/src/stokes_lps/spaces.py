"""Finite element spaces, nodal interpolation and local projections.

Two scalar elements are provided: linear ``P1`` and ``P2Bubble``, the
quadratic Lagrange element enriched by the cubic bubble times linears. The
P2Bubble basis is hierarchical: the six quadratic Lagrange functions keep
their nodal meaning and the three extra functions ``b * lambda_k``
(``b = lambda_0 lambda_1 lambda_2``) vanish on the cell boundary.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatchError, InvalidArgumentError
from .mesh import LOCAL_EDGES, REF_BARY_GRAD, Mesh, locate_point
from .quadrature import DEFAULT_RULE, QuadratureRule


class ElementKind(enum.Enum):
    P1 = "P1"
    P2_BUBBLE = "P2Bubble"

    @property
    def n_local(self) -> int:
        return 3 if self is ElementKind.P1 else 9

    @property
    def degree(self) -> int:
        """Polynomial degree of the local shape functions."""
        return 1 if self is ElementKind.P1 else 3


@dataclass(frozen=True)
class ProjectionKind:
    """Local projection space D_h(K) = P_s(K); ``degree == -1`` is the zero space."""

    degree: int = -1

    def __post_init__(self):
        if self.degree < -1:
            raise InvalidArgumentError(f"projection degree must be >= -1, got {self.degree}")

    @classmethod
    def zero(cls) -> ProjectionKind:
        return cls(-1)

    @classmethod
    def pdisc(cls, s: int) -> ProjectionKind:
        return cls(s)

    @property
    def is_zero(self) -> bool:
        return self.degree < 0

    @property
    def dim(self) -> int:
        s = self.degree
        return (s + 1) * (s + 2) // 2 if s >= 0 else 0

    def __str__(self):
        return "Zero" if self.is_zero else f"PDisc{self.degree}"


def _p1_eval(lam):
    values = lam.copy()
    dlam = np.broadcast_to(np.eye(3), lam.shape[:-1] + (3, 3))
    return values, dlam


def _p2b_eval(lam):
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    shape = lam.shape[:-1]
    values = np.empty(shape + (9,))
    dlam = np.zeros(shape + (9, 3))  # d(phi_i)/d(lambda_k)
    for i in range(3):
        li = lam[..., i]
        values[..., i] = li * (2.0 * li - 1.0)
        dlam[..., i, i] = 4.0 * li - 1.0
    for k, (i, j) in enumerate(LOCAL_EDGES):
        values[..., 3 + k] = 4.0 * lam[..., i] * lam[..., j]
        dlam[..., 3 + k, i] = 4.0 * lam[..., j]
        dlam[..., 3 + k, j] = 4.0 * lam[..., i]
    b = l0 * l1 * l2
    db = np.stack([l1 * l2, l0 * l2, l0 * l1], axis=-1)
    for k in range(3):
        values[..., 6 + k] = b * lam[..., k]
        dlam[..., 6 + k, :] = db * lam[..., k, None]
        dlam[..., 6 + k, k] += b
    return values, dlam


def eval_basis(kind: ElementKind, bary):
    """Shape function values and reference gradients at barycentric points.

    ``bary`` has shape (..., 3). Returns ``values`` (..., n_local) and
    ``grads`` (..., n_local, 2) with respect to the reference coordinates
    (xi, eta) = (lambda_1, lambda_2). Physical gradients are
    ``inv(J).T @ grad``.
    """
    lam = np.asarray(bary, dtype=float)
    values, dlam = (_p1_eval if kind is ElementKind.P1 else _p2b_eval)(lam)
    return values, dlam @ REF_BARY_GRAD


def bubble_factor(bary):
    lam = np.asarray(bary, dtype=float)
    return lam[..., 0] * lam[..., 1] * lam[..., 2]


# interior points fixing the three bubble coefficients in nodal interpolation
_BUBBLE_NODES = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])


@dataclass(frozen=True, eq=False)
class DofMap:
    element: ElementKind
    mesh: Mesh
    n_dofs: int
    cell_dofs: np.ndarray  # (nc, n_local)
    boundary_dofs: np.ndarray  # sorted indices
    dof_points: np.ndarray  # (n_dofs, 2); bubble dofs sit at the cell barycenter

    @property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.boundary_dofs] = False
        return np.flatnonzero(mask)


def build_space(m: Mesh, kind: ElementKind) -> DofMap:
    """Global numbering: vertices, then edges, then three bubbles per cell."""
    nv = m.n_vertices
    if kind is ElementKind.P1:
        cell_dofs = m.cells.copy()
        points = m.vertices.copy()
        n = nv
    else:
        ne, nc = m.n_edges, m.n_cells
        n = nv + ne + 3 * nc
        bubbles = nv + ne + 3 * np.arange(nc)[:, None] + np.arange(3)
        cell_dofs = np.hstack([m.cells, nv + m.cell_edges, bubbles])
        mids = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
        centers = m.vertices[m.cells].mean(axis=1)
        points = np.vstack([m.vertices, mids, np.repeat(centers, 3, axis=0)])
    on_boundary = np.any((points == 0.0) | (points == 1.0), axis=1)
    if kind is ElementKind.P2_BUBBLE:
        on_boundary[nv + m.n_edges:] = False
    for a in (cell_dofs, points):
        a.setflags(write=False)
    return DofMap(kind, m, n, cell_dofs, np.flatnonzero(on_boundary), points)


@dataclass(frozen=True, eq=False)
class FeFunction:
    """Coefficient vector of a scalar (components=1) or vector (components=2) field.

    Vector coefficients are stored component-major: all x-coefficients, then
    all y-coefficients.
    """

    dofmap: DofMap
    components: int
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float)
        if c.shape != (self.components * self.dofmap.n_dofs,):
            raise DimensionMismatchError(
                f"expected {self.components * self.dofmap.n_dofs} coefficients, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    def component_coefficients(self) -> np.ndarray:
        """Coefficients reshaped to (components, n_dofs)."""
        return self.coefficients.reshape(self.components, self.dofmap.n_dofs)

    def __mul__(self, s: float) -> FeFunction:
        return FeFunction(self.dofmap, self.components, s * self.coefficients)

    __rmul__ = __mul__


def _call_field(f, x, y, components):
    vals = np.asarray(f(x, y), dtype=float)
    if components == 1:
        return np.broadcast_to(vals, x.shape)[None]
    if vals.ndim == 1:
        vals = vals.reshape((2,) + (1,) * x.ndim)
    return np.broadcast_to(vals, (2,) + x.shape)


def interpolate_nodal(f: Callable, space: DofMap, components: int = 1) -> FeFunction:
    """Nodal interpolant of ``f(x, y)``.

    Vertex and edge coefficients are point values. For P2Bubble the three
    bubble coefficients of each cell make the interpolant agree with ``f``
    at three interior points, so every function of the local space is
    reproduced exactly. Vector fields return a pair/array of length 2.
    """
    m = space.mesh
    coef = np.zeros((components, space.n_dofs))
    nodal = space.n_dofs if space.element is ElementKind.P1 else m.n_vertices + m.n_edges
    pts = space.dof_points[:nodal]
    coef[:, :nodal] = _call_field(f, pts[:, 0], pts[:, 1], components)
    if space.element is ElementKind.P2_BUBBLE:
        vals, _ = eval_basis(space.element, _BUBBLE_NODES)
        xq = m.map_to_physical(np.arange(m.n_cells)[:, None], _BUBBLE_NODES[None])
        fq = _call_field(f, xq[..., 0], xq[..., 1], components)  # (comp, nc, 3)
        lagrange = coef[:, space.cell_dofs[:, :6]]  # (comp, nc, 6)
        rest = fq - np.einsum("cki,ji->ckj", lagrange, vals[:, :6])
        bubble_coef = np.linalg.solve(vals[:, 6:], rest.reshape(-1, 3).T).T
        coef[:, space.cell_dofs[:, 6:]] = bubble_coef.reshape(components, m.n_cells, 3)
    return FeFunction(space, components, coef.ravel())


def evaluate_cells(u: FeFunction, cells, bary) -> np.ndarray:
    """Values of ``u`` at barycentric points of given cells; shape (..., components)."""
    space = u.dofmap
    vals, _ = eval_basis(space.element, bary)
    local = u.component_coefficients()[:, space.cell_dofs[cells]]  # (comp, ..., n_local)
    return np.moveaxis(np.einsum("c...i,...i->c...", local, vals), 0, -1)


def gradients_cells(u: FeFunction, cells, bary) -> np.ndarray:
    """Physical gradients of ``u``; shape (..., components, 2)."""
    space = u.dofmap
    _, grads = eval_basis(space.element, bary)
    inv_j = space.mesh.inverse_jacobians[cells]
    phys = np.einsum("...ed,...ie->...id", inv_j, grads)
    local = u.component_coefficients()[:, space.cell_dofs[cells]]
    return np.moveaxis(np.einsum("c...i,...id->c...d", local, phys), 0, -2)


def evaluate_at(u: FeFunction, x):
    """Value of ``u`` at a point; a float for scalar fields, an array of 2 otherwise."""
    cell, bary = locate_point(u.dofmap.mesh, x)
    val = evaluate_cells(u, cell, bary)
    return float(val[0]) if u.components == 1 else val


def projection_basis(proj: ProjectionKind, bary) -> np.ndarray:
    """Monomials xi^a eta^b, a + b <= s, in reference coordinates; shape (..., dim)."""
    lam = np.asarray(bary, dtype=float)
    xi, eta = lam[..., 1], lam[..., 2]
    cols = [xi**a * eta**(t - a) for t in range(proj.degree + 1) for a in range(t, -1, -1)]
    if not cols:
        return np.zeros(lam.shape[:-1] + (0,))
    return np.stack(cols, axis=-1)


def fluctuation_matrix(proj: ProjectionKind, rule: QuadratureRule = DEFAULT_RULE) -> np.ndarray:
    """Matrix mapping samples at the rule's points to samples of their fluctuation.

    The local L2 projection commutes with affine maps, so one matrix serves
    every cell.
    """
    n = rule.n_points
    if proj.is_zero:
        return np.eye(n)
    phi = projection_basis(proj, rule.points)
    gram = phi.T @ (rule.weights[:, None] * phi)
    return np.eye(n) - phi @ np.linalg.solve(gram, phi.T * rule.weights)


def fluctuation_apply(q: FeFunction, proj: ProjectionKind, cell: int,
                      rule: QuadratureRule = DEFAULT_RULE) -> np.ndarray:
    """Samples of grad q - pi_K(grad q) at the rule's points on one cell, shape (nq, 2)."""
    if q.components != 1:
        raise InvalidArgumentError("fluctuation_apply expects a scalar (pressure) field")
    grads = gradients_cells(q, np.full(rule.n_points, cell), rule.points)[:, 0, :]
    if proj.is_zero:
        return grads
    area = abs(q.dofmap.mesh.signed_areas[cell])
    w = 2.0 * area * rule.weights
    phi = projection_basis(proj, rule.points)
    gram = phi.T @ (w[:, None] * phi)
    assert np.linalg.cond(gram) < 1e12, "degenerate cell in local projection"
    coef = np.linalg.solve(gram, phi.T @ (w[:, None] * grads))
    return grads - phi @ coef


def local_infsup_check(m: Mesh, cell: int, kind: ElementKind, proj: ProjectionKind,
                       rule: QuadratureRule = DEFAULT_RULE) -> float | None:
    """Local inf-sup constant between cell-supported functions and D_h(K).

    Returns ``None`` when D_h(K) = {0}, where the condition holds vacuously.
    Elements without cell-supported functions (P1) give 0.
    """
    if proj.is_zero:
        return None
    if kind is ElementKind.P1:
        return 0.0
    area = abs(m.signed_areas[cell])
    w = 2.0 * area * rule.weights
    vals, _ = eval_basis(kind, rule.points)
    v = vals[:, 6:]
    d = projection_basis(proj, rule.points)
    gv = v.T @ (w[:, None] * v)
    gd = d.T @ (w[:, None] * d)
    coupling = v.T @ (w[:, None] * d)
    lv = np.linalg.cholesky(gv)
    ld = np.linalg.cholesky(gd)
    normalized = np.linalg.solve(lv, np.linalg.solve(ld, coupling.T).T)
    sv = np.linalg.svd(normalized, compute_uv=False)
    if normalized.shape[0] < normalized.shape[1]:
        return 0.0
    return float(sv.min())
