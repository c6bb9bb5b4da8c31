"""Structured quadrilateral meshes of axis-aligned rectangles."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

# local face numbering, counter-clockwise: 0=bottom, 1=right, 2=top, 3=left
_FACE_VERTS = ((0, 1), (1, 2), (2, 3), (3, 0))


@dataclass(frozen=True)
class Rect:
    ax: float
    bx: float
    ay: float
    by: float

    @property
    def widths(self) -> tuple[float, float]:
        return self.bx - self.ax, self.by - self.ay

    @property
    def area(self) -> float:
        wx, wy = self.widths
        return wx * wy


@dataclass(frozen=True)
class Mesh:
    """Uniform nx-by-ny grid of axis-aligned rectangular cells.

    Vertices are numbered row-major (x fastest); each cell stores its four
    vertex indices counter-clockwise, so the cell map has positive Jacobian.
    Boundary faces carry exactly one label, 'dirichlet' or 'neumann'.
    """

    domain: Rect
    nx: int
    ny: int
    vertices: np.ndarray            # (n_verts, 2)
    cells: np.ndarray               # (n_cells, 4) ccw vertex indices
    boundary_faces: tuple = field(repr=False)  # ((cell, local_face, label), ...)
    dirichlet_predicate: Callable = field(repr=False, default=None)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_size(self) -> tuple[float, float]:
        wx, wy = self.domain.widths
        return wx / self.nx, wy / self.ny

    @property
    def h(self) -> float:
        """Mesh size: the cell diagonal (all cells are congruent)."""
        hx, hy = self.cell_size
        return float(np.hypot(hx, hy))

    def face_midpoint(self, cell: int, local_face: int) -> np.ndarray:
        va, vb = _FACE_VERTS[local_face]
        return 0.5 * (self.vertices[self.cells[cell, va]] + self.vertices[self.cells[cell, vb]])


def build_rect_mesh(domain: Rect, nx: int, ny: int,
                    dirichlet_predicate: Callable | None = None) -> Mesh:
    """Build a uniform quadrilateral mesh of ``domain``.

    ``dirichlet_predicate(point) -> bool`` is evaluated at boundary-face
    midpoints; faces where it holds are labelled Dirichlet, the rest Neumann.
    ``None`` labels the whole boundary Dirichlet.
    """
    if nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be >= 1, got nx={nx}, ny={ny}")
    wx, wy = domain.widths
    if wx <= 0.0 or wy <= 0.0:
        raise ValueError(f"degenerate domain {domain}")
    if dirichlet_predicate is None:
        dirichlet_predicate = lambda p: True  # noqa: E731

    xs = np.linspace(domain.ax, domain.bx, nx + 1)
    ys = np.linspace(domain.ay, domain.by, ny + 1)
    xv, yv = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([xv.ravel(), yv.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    cells = np.empty((nx * ny, 4), dtype=np.int64)
    for j in range(ny):
        for i in range(nx):
            cells[j * nx + i] = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1))

    faces = []
    for i in range(nx):
        faces.append((i, 0))                      # bottom row
        faces.append(((ny - 1) * nx + i, 2))      # top row
    for j in range(ny):
        faces.append((j * nx, 3))                 # left column
        faces.append((j * nx + nx - 1, 1))        # right column

    mesh = Mesh(domain, nx, ny, vertices, cells, boundary_faces=(),
                dirichlet_predicate=dirichlet_predicate)
    labelled = tuple(
        (c, f, DIRICHLET if dirichlet_predicate(mesh.face_midpoint(c, f)) else NEUMANN)
        for c, f in faces
    )
    object.__setattr__(mesh, "boundary_faces", labelled)
    return mesh


def refine_uniform(mesh: Mesh) -> Mesh:
    """Halve both cell edges; boundary labels are re-derived from the stored
    predicate, which reproduces the parent labelling on uniform refinement."""
    return build_rect_mesh(mesh.domain, 2 * mesh.nx, 2 * mesh.ny, mesh.dirichlet_predicate)
