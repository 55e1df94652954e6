"""Nested conforming triangulations of the unit square."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, OutOfDomainError

# reference gradients of the barycentric coordinates (lambda_0, lambda_1, lambda_2)
# with x = v0 + J @ (xi, eta), lambda_1 = xi, lambda_2 = eta
REF_BARY_GRAD = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])

# local edge k joins local vertices LOCAL_EDGES[k]
LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))

LOCATE_TOL = 1e-12


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation with optional link to the mesh it was refined from.

    ``parent_cell[k]`` is the index of the cell in ``parent`` that contains
    cell ``k``; both are ``None`` for a level-0 mesh.
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary_vertex: np.ndarray
    parent_cell: np.ndarray | None = None
    level: int = 0
    parent: Mesh | None = None

    def __post_init__(self):
        object.__setattr__(self, "vertices", _readonly(np.asarray(self.vertices, dtype=float)))
        object.__setattr__(self, "cells", _readonly(np.asarray(self.cells, dtype=np.int64)))
        object.__setattr__(self, "boundary_vertex", _readonly(np.asarray(self.boundary_vertex, dtype=bool)))
        if self.parent_cell is not None:
            object.__setattr__(self, "parent_cell", _readonly(np.asarray(self.parent_cell, dtype=np.int64)))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @cached_property
    def _edge_data(self):
        local = np.array(LOCAL_EDGES)
        pairs = np.sort(self.cells[:, local], axis=2).reshape(-1, 2)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        return _readonly(edges), _readonly(inverse.reshape(-1, 3))

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs, in lexicographic order."""
        return self._edge_data[0]

    @property
    def cell_edges(self) -> np.ndarray:
        """Global edge index of each cell's local edges (0-1, 1-2, 2-0)."""
        return self._edge_data[1]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def jacobians(self) -> np.ndarray:
        """Affine map matrices J with columns v1 - v0 and v2 - v0, shape (nc, 2, 2)."""
        v = self.vertices[self.cells]
        return _readonly(np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2))

    @cached_property
    def signed_areas(self) -> np.ndarray:
        return _readonly(0.5 * np.linalg.det(self.jacobians))

    @cached_property
    def inverse_jacobians(self) -> np.ndarray:
        return _readonly(np.linalg.inv(self.jacobians))

    @cached_property
    def cell_diameters(self) -> np.ndarray:
        v = self.vertices[self.cells]
        lengths = np.linalg.norm(v[:, [1, 2, 0]] - v, axis=2)
        return _readonly(lengths.max(axis=1))

    @cached_property
    def children(self) -> dict[int, np.ndarray]:
        """Map from parent cell index to the indices of its children in this mesh."""
        if self.parent_cell is None:
            return {}
        order = np.argsort(self.parent_cell, kind="stable")
        bounds = np.searchsorted(self.parent_cell[order], np.arange(self.parent.n_cells + 1))
        return {k: order[bounds[k]:bounds[k + 1]] for k in range(self.parent.n_cells)}

    def map_to_physical(self, cells, bary) -> np.ndarray:
        """Physical coordinates of barycentric points; ``bary`` has shape (..., 3)."""
        v = self.vertices[self.cells[cells]]
        return np.einsum("...k,...kd->...d", bary, v)


def _boundary_flags(vertices):
    x, y = vertices[:, 0], vertices[:, 1]
    return (x == 0.0) | (x == 1.0) | (y == 0.0) | (y == 1.0)


def unit_square_mesh(n: int) -> Mesh:
    """Structured mesh with ``n`` squares per side, each cut along the
    lower-left to upper-right diagonal."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidArgumentError(f"subdivisions per side must be a positive integer, got {n!r}")
    n = int(n)
    t = np.arange(n + 1) / n
    xx, yy = np.meshgrid(t, t)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])
    j, i = np.divmod(np.arange(n * n), n)
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    cells[0::2] = np.column_stack([v00, v10, v11])
    cells[1::2] = np.column_stack([v00, v11, v01])
    return Mesh(vertices, cells, _boundary_flags(vertices))


def refine_uniform(m: Mesh) -> Mesh:
    """Red refinement: every triangle is split into four through its edge midpoints."""
    edges = m.edges
    midpoints = 0.5 * (m.vertices[edges[:, 0]] + m.vertices[edges[:, 1]])
    vertices = np.vstack([m.vertices, midpoints])
    mid = m.cell_edges + m.n_vertices
    a, b, c = m.cells.T
    m01, m12, m20 = mid.T
    children = np.stack([
        np.column_stack([a, m01, m20]),
        np.column_stack([m01, b, m12]),
        np.column_stack([m20, m12, c]),
        np.column_stack([m01, m12, m20]),
    ], axis=1).reshape(-1, 3)
    parent_cell = np.repeat(np.arange(m.n_cells), 4)
    boundary = np.concatenate([m.boundary_vertex, _boundary_flags(midpoints)])
    return Mesh(vertices, children, boundary, parent_cell, m.level + 1, m)


def mesh_size(m: Mesh) -> float:
    """Largest cell diameter."""
    return float(m.cell_diameters.max())


def barycentric_coordinates(m: Mesh, cells, points) -> np.ndarray:
    """Barycentric coordinates of ``points`` relative to ``cells`` (broadcasting)."""
    cells = np.asarray(cells)
    v0 = m.vertices[m.cells[cells, 0]]
    ref = np.einsum("...ij,...j->...i", m.inverse_jacobians[cells], np.asarray(points) - v0)
    return np.concatenate([1.0 - ref.sum(axis=-1, keepdims=True), ref], axis=-1)


def _check_in_domain(points):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    bad = ~np.all((points >= -LOCATE_TOL) & (points <= 1.0 + LOCATE_TOL), axis=1)
    if np.any(bad):
        raise OutOfDomainError(f"point {points[np.argmax(bad)].tolist()} lies outside the unit square")
    return points


def locate_point(m: Mesh, x, hint: int | None = None):
    """Find the cell containing ``x``.

    Returns ``(cell, bary)``. Points on shared edges or vertices go to the
    lowest-indexed containing cell. ``hint`` is a cell of ``m.parent``; only
    its children are searched.
    """
    x = _check_in_domain(x)[0]
    if hint is None:
        candidates = np.arange(m.n_cells)
    else:
        if m.parent is None:
            raise InvalidArgumentError("a hint needs a mesh with a parent level")
        candidates = m.children[int(hint)]
    bary = barycentric_coordinates(m, candidates, x[None, :])
    inside = np.all(bary >= -LOCATE_TOL, axis=1)
    if not inside.any():
        if hint is not None:
            raise InvalidArgumentError(f"point {x.tolist()} is not inside hint cell {hint}")
        raise OutOfDomainError(f"point {x.tolist()} is not covered by the mesh")
    k = int(np.argmax(inside))
    return int(candidates[k]), bary[k]


def locate_points(m: Mesh, points):
    """Vectorized ``locate_point`` without hints; returns (cells, bary)."""
    points = _check_in_domain(points)
    cells = np.full(len(points), -1, dtype=np.int64)
    bary = np.zeros((len(points), 3))
    # chunk to bound the (points x cells) work array
    chunk = max(1, 2_000_000 // max(m.n_cells, 1))
    all_cells = np.arange(m.n_cells)
    for start in range(0, len(points), chunk):
        pts = points[start:start + chunk]
        b = barycentric_coordinates(m, all_cells[None, :], pts[:, None, :])
        inside = np.all(b >= -LOCATE_TOL, axis=2)
        if not inside.any(axis=1).all():
            bad = pts[~inside.any(axis=1)][0]
            raise OutOfDomainError(f"point {bad.tolist()} is not covered by the mesh")
        k = np.argmax(inside, axis=1)
        cells[start:start + chunk] = k
        bary[start:start + chunk] = b[np.arange(len(pts)), k]
    return cells, bary


def ancestor_cells(fine: Mesh, coarse: Mesh) -> np.ndarray:
    """For each cell of ``fine``, the index of the ``coarse`` cell containing it.

    ``coarse`` must be ``fine`` itself or one of its refinement ancestors.
    """
    cells = np.arange(fine.n_cells)
    m = fine
    while m is not coarse:
        if m.parent is None:
            raise InvalidArgumentError("meshes are not nested: coarse mesh is not an ancestor of the fine mesh")
        cells = m.parent_cell[cells]
        m = m.parent
    return cells


def write_vtk(m: Mesh, path, point_data: dict | None = None, title: str = "stokes_lps mesh") -> Path:
    """Write the mesh as a legacy ASCII VTK unstructured grid.

    ``point_data`` maps names to arrays of length ``n_vertices`` (scalars) or
    shape (n_vertices, 2) (vectors, padded with a zero z-component).
    """
    path = Path(path)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {m.n_vertices} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in m.vertices]
    lines.append(f"CELLS {m.n_cells} {4 * m.n_cells}")
    lines += [f"3 {a} {b} {c}" for a, b, c in m.cells]
    lines.append(f"CELL_TYPES {m.n_cells}")
    lines += ["5"] * m.n_cells
    if point_data:
        lines.append(f"POINT_DATA {m.n_vertices}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [f"{v:.17g}" for v in values]
            else:
                lines.append(f"VECTORS {name} double")
                lines += [f"{a:.17g} {b:.17g} 0" for a, b in values]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc
    return path
