"""Continuous Q_p Lagrange spaces on structured quad meshes, with assembly."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh import DIRICHLET, Mesh

# Sparse matrices throughout are scipy CSR.
SparseMatrix = sp.csr_matrix


def lagrange_nodes_1d(p: int, placement: str = "equispaced") -> np.ndarray:
    """Node positions on [0, 1] for the 1D degree-p Lagrange basis."""
    if p < 1:
        raise ValueError(f"polynomial degree must be >= 1, got {p}")
    if placement == "equispaced":
        return np.linspace(0.0, 1.0, p + 1)
    if placement == "gauss_lobatto":
        # roots of (1-x^2) P'_p(x) mapped to [0, 1]
        if p == 1:
            interior = np.array([])
        else:
            legc = np.zeros(p + 1)
            legc[p] = 1.0
            interior = np.sort(np.polynomial.legendre.Legendre(legc).deriv().roots())
        return np.concatenate([[0.0], 0.5 * (interior + 1.0), [1.0]])
    raise ValueError(f"unknown node placement {placement!r}")


def lagrange_eval_1d(nodes: np.ndarray, x: np.ndarray, deriv: int = 0) -> np.ndarray:
    """Values (or first derivatives) of all 1D Lagrange basis functions.

    Returns array of shape (len(nodes), len(x)). Uses the direct product
    formula, which is exact up to roundoff for the small p used here.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = len(nodes)
    out = np.empty((n, len(x)))
    for j in range(n):
        others = np.delete(nodes, j)
        denom = np.prod(nodes[j] - others)
        if deriv == 0:
            out[j] = np.prod(x[None, :] - others[:, None], axis=0) / denom
        elif deriv == 1:
            acc = np.zeros_like(x)
            for i in range(len(others)):
                rest = np.delete(others, i)
                acc += np.prod(x[None, :] - rest[:, None], axis=0)
            out[j] = acc / denom
        else:
            raise ValueError("only deriv 0 or 1 supported")
    return out


def gauss_rule_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class FeSpace:
    """Global C0 Lagrange space Q_p on a structured mesh.

    Global DOFs form the (p*nx+1) x (p*ny+1) tensor grid of per-cell nodes,
    numbered row-major with x fastest, so shared-edge DOFs coincide.
    """

    mesh: Mesh
    p: int
    placement: str
    dof_coords: np.ndarray          # (J, 2)
    cell_dofs: np.ndarray           # (n_cells, (p+1)^2)
    dirichlet_dofs: np.ndarray      # sorted global indices
    free_dofs: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.dof_coords.shape[0]

    @property
    def n_free(self) -> int:
        return self.free_dofs.shape[0]

    @cached_property
    def mass(self) -> SparseMatrix:
        return assemble_mass(self)

    @cached_property
    def stiffness_unit(self) -> SparseMatrix:
        """Stiffness with coefficient 1 (used for the H1 seminorm)."""
        return assemble_stiffness(self, lambda pts: np.ones(len(pts)))

    def restrict_free(self, mat: SparseMatrix) -> SparseMatrix:
        return mat[self.free_dofs][:, self.free_dofs].tocsr()

    def expand_free(self, vec: np.ndarray) -> np.ndarray:
        """Zero-padded full-length vector from free-DOF values."""
        out = np.zeros(self.n_dofs)
        out[self.free_dofs] = vec
        return out


def build_space(mesh: Mesh, p: int, placement: str = "equispaced") -> FeSpace:
    nx, ny = mesh.nx, mesh.ny
    gx, gy = p * nx + 1, p * ny + 1
    ts = lagrange_nodes_1d(p, placement)
    hx, hy = mesh.cell_size

    # tensor coordinates of the global node grid
    xcoords = np.empty(gx)
    ycoords = np.empty(gy)
    xcoords[::p] = np.linspace(mesh.domain.ax, mesh.domain.bx, nx + 1)
    ycoords[::p] = np.linspace(mesh.domain.ay, mesh.domain.by, ny + 1)
    for a in range(1, p):
        xcoords[a::p] = xcoords[:-1:p] + ts[a] * hx
        ycoords[a::p] = ycoords[:-1:p] + ts[a] * hy
    xv, yv = np.meshgrid(xcoords, ycoords, indexing="xy")
    dof_coords = np.column_stack([xv.ravel(), yv.ravel()])

    # per-cell global indices, local ordering y-major over (a, b) with x fastest
    local = np.arange(p + 1)
    cell_dofs = np.empty((nx * ny, (p + 1) ** 2), dtype=np.int64)
    for j in range(ny):
        rows = (j * p + local) * gx
        for i in range(nx):
            cols = i * p + local
            cell_dofs[j * nx + i] = (rows[:, None] + cols[None, :]).ravel()

    dir_set = set()
    for cell, face, label in mesh.boundary_faces:
        if label != DIRICHLET:
            continue
        dofs = cell_dofs[cell].reshape(p + 1, p + 1)
        edge = {0: dofs[0, :], 1: dofs[:, -1], 2: dofs[-1, :], 3: dofs[:, 0]}[face]
        dir_set.update(int(d) for d in edge)
    dirichlet = np.array(sorted(dir_set), dtype=np.int64)
    mask = np.ones(gx * gy, dtype=bool)
    mask[dirichlet] = False
    free = np.nonzero(mask)[0]

    return FeSpace(mesh, p, placement, dof_coords, cell_dofs, dirichlet, free)


def _reference_tabulation(space: FeSpace, nq: int):
    """Basis values/derivatives at the tensor Gauss points of one cell."""
    ts = lagrange_nodes_1d(space.p, space.placement)
    q, w = gauss_rule_01(nq)
    v = lagrange_eval_1d(ts, q)           # (p+1, nq)
    d = lagrange_eval_1d(ts, q, deriv=1)
    # tensor basis phi_{ab}(x, y) = l_b(x) l_a(y), local index a*(p+1)+b
    phi = np.einsum("aq,br->abqr", v, v).reshape((space.p + 1) ** 2, nq, nq)
    phix = np.einsum("aq,br->abqr", v, d).reshape((space.p + 1) ** 2, nq, nq)
    phiy = np.einsum("aq,br->abqr", d, v).reshape((space.p + 1) ** 2, nq, nq)
    w2 = np.multiply.outer(w, w)          # (nq, nq), y-index first
    return q, w2, phi, phix, phiy


def _quad_points_all_cells(space: FeSpace, q: np.ndarray) -> np.ndarray:
    """Physical coordinates of all quadrature points, shape (n_cells, nq, nq, 2)."""
    mesh = space.mesh
    hx, hy = mesh.cell_size
    x0 = mesh.vertices[mesh.cells[:, 0]]  # lower-left corner per cell
    px = x0[:, 0, None, None] + q[None, None, :] * hx
    py = x0[:, 1, None, None] + q[None, :, None] * hy
    pts = np.empty((mesh.n_cells, len(q), len(q), 2))
    pts[..., 0] = px
    pts[..., 1] = py
    return pts


def _scatter(space: FeSpace, local_all: np.ndarray) -> SparseMatrix:
    nd = space.cell_dofs.shape[1]
    rows = np.repeat(space.cell_dofs, nd, axis=1).ravel()
    cols = np.tile(space.cell_dofs, (1, nd)).ravel()
    mat = sp.coo_matrix((local_all.ravel(), (rows, cols)),
                        shape=(space.n_dofs, space.n_dofs))
    return mat.tocsr()


def assemble_mass(space: FeSpace, nq: int | None = None) -> SparseMatrix:
    """Mass matrix <phi_i, phi_j> by tensor Gauss quadrature (p+2 points)."""
    nq = nq or space.p + 2
    _, w2, phi, _, _ = _reference_tabulation(space, nq)
    hx, hy = space.mesh.cell_size
    local = np.einsum("aqr,bqr,qr->ab", phi, phi, w2) * hx * hy
    local_all = np.broadcast_to(local, (space.mesh.n_cells, *local.shape))
    return _scatter(space, local_all)


def assemble_stiffness(space: FeSpace, csq: Callable, nq: int | None = None) -> SparseMatrix:
    """Weighted stiffness <csq grad phi_i, grad phi_j>.

    ``csq`` maps an (N, 2) array of points to N positive values; it must be
    smooth on each cell (discontinuities must align with cell edges).
    """
    nq = nq or space.p + 2
    q, w2, _, phix, phiy = _reference_tabulation(space, nq)
    hx, hy = space.mesh.cell_size
    pts = _quad_points_all_cells(space, q)
    cvals = np.asarray(csq(pts.reshape(-1, 2))).reshape(pts.shape[:3])
    if not np.all(cvals > 0.0):
        raise ValueError("csq must be positive at all quadrature points")
    cw = cvals * w2[None]
    local = (np.einsum("cqr,aqr,bqr->cab", cw, phix, phix) * (hy / hx)
             + np.einsum("cqr,aqr,bqr->cab", cw, phiy, phiy) * (hx / hy))
    return _scatter(space, local)


def interpolate(space: FeSpace, func: Callable) -> np.ndarray:
    """Nodal interpolation: w_j = func(dof_coords_j)."""
    vals = np.asarray(func(space.dof_coords), dtype=float)
    if vals.shape != (space.n_dofs,):
        raise ValueError(f"interpolated values have shape {vals.shape}, "
                         f"expected ({space.n_dofs},)")
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite value in interpolated data")
    return vals


def _locate_cells(space: FeSpace, points: np.ndarray, tol: float = 1e-12):
    mesh = space.mesh
    d = mesh.domain
    hx, hy = mesh.cell_size
    pts = np.atleast_2d(points)
    wx, wy = d.widths
    if np.any(pts[:, 0] < d.ax - tol * wx) or np.any(pts[:, 0] > d.bx + tol * wx) \
            or np.any(pts[:, 1] < d.ay - tol * wy) or np.any(pts[:, 1] > d.by + tol * wy):
        raise ValueError("point outside domain")
    ix = np.clip(((pts[:, 0] - d.ax) // hx).astype(int), 0, mesh.nx - 1)
    iy = np.clip(((pts[:, 1] - d.ay) // hy).astype(int), 0, mesh.ny - 1)
    xi = (pts[:, 0] - d.ax) / hx - ix
    eta = (pts[:, 1] - d.ay) / hy - iy
    return iy * mesh.nx + ix, xi, eta


def eval_field(space: FeSpace, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Point values of sum_j coeffs_j phi_j."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape != (space.n_dofs,):
        raise ValueError("coefficient vector length mismatch")
    cells, xi, eta = _locate_cells(space, points)
    ts = lagrange_nodes_1d(space.p, space.placement)
    out = np.empty(len(cells))
    for k in range(len(cells)):
        lx = lagrange_eval_1d(ts, np.array([xi[k]]))[:, 0]
        ly = lagrange_eval_1d(ts, np.array([eta[k]]))[:, 0]
        local = coeffs[space.cell_dofs[cells[k]]].reshape(space.p + 1, space.p + 1)
        out[k] = ly @ local @ lx
    return out


def l2_norm(space: FeSpace, coeffs: np.ndarray) -> float:
    w = np.asarray(coeffs)
    return float(np.sqrt(max(w @ (space.mass @ w), 0.0)))


def h1_seminorm(space: FeSpace, coeffs: np.ndarray) -> float:
    w = np.asarray(coeffs)
    return float(np.sqrt(max(w @ (space.stiffness_unit @ w), 0.0)))


@dataclass(frozen=True)
class QuadratureEval:
    """Evaluation of FE fields at all cell quadrature points at once.

    ``value/gradx/grady`` applied to a coefficient vector give arrays over the
    global quadrature point set; ``weights`` are the matching dV weights.
    Used for error norms and functionals over subsets of the domain.
    """

    points: np.ndarray              # (Nq, 2)
    weights: np.ndarray             # (Nq,)
    val_op: SparseMatrix = field(repr=False)
    gx_op: SparseMatrix = field(repr=False)
    gy_op: SparseMatrix = field(repr=False)

    def values(self, coeffs: np.ndarray) -> np.ndarray:
        return self.val_op @ coeffs

    def grads(self, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.gx_op @ coeffs, self.gy_op @ coeffs

    def integrate(self, pointwise: np.ndarray) -> float:
        return float(self.weights @ pointwise)


def quadrature_eval(space: FeSpace, nq: int | None = None) -> QuadratureEval:
    nq = nq or space.p + 3
    q, w2, phi, phix, phiy = _reference_tabulation(space, nq)
    hx, hy = space.mesh.cell_size
    pts = _quad_points_all_cells(space, q).reshape(-1, 2)
    nc = space.mesh.n_cells
    p1sq = (space.p + 1) ** 2
    npq = nq * nq
    rows = np.repeat(np.arange(nc * npq), p1sq)
    cols = np.repeat(space.cell_dofs[:, None, :], npq, axis=1).ravel()

    def build(tab, scale):
        data = np.broadcast_to((tab.reshape(p1sq, npq).T * scale)[None],
                               (nc, npq, p1sq)).ravel()
        return sp.coo_matrix((data, (rows, cols)),
                             shape=(nc * npq, space.n_dofs)).tocsr()

    weights = np.broadcast_to(w2.ravel() * hx * hy, (nc, npq)).ravel()
    return QuadratureEval(pts, weights, build(phi, 1.0),
                          build(phix, 1.0 / hx), build(phiy, 1.0 / hy))
