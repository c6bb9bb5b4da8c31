"""Per-slab right-hand-side data on the free DOFs.

The steppers consume mass/stiffness products of the interpolated forcing and
of the boundary lifting (which lives on the Dirichlet nodes only and is zero
at interior nodes).  This module builds those products from a problem and a
space; steppers never touch the problem directly, which keeps them usable
with bare matrices (e.g. the scalar-oscillator tests).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fespace import FeSpace, interpolate
from .problem import WaveProblem, _zero_data


@dataclass(frozen=True)
class SlabData:
    """Hermite endpoint data of one slab, as free-DOF product vectors.

    Slot ordering follows the slab coefficient convention: s = 0..l left
    endpoint, then l+1..2l+1 right endpoint, each scaled by tau^s.
    ``f_m[s]`` is M (I_h d_t^s f), ``vd_m[s]`` is M applied to the lifting of
    d_t^s v^D = d_t^{s+1} g, ``ud_a[s]`` is A applied to the lifting of
    d_t^s g; all restricted to free rows.
    """

    f_m: list
    vd_m: list
    ud_a: list


def zero_slab_data(n_free: int, degree: int) -> SlabData:
    z = [np.zeros(n_free) for _ in range(degree + 1)]
    return SlabData(f_m=z, vd_m=list(z), ud_a=list(z))


class ProblemData:
    """Assembles slab data vectors for a (problem, space) pair."""

    def __init__(self, problem: WaveProblem, space: FeSpace, M, A):
        self.problem = problem
        self.space = space
        free = space.free_dofs
        diri = space.dirichlet_dofs
        self._m_rows = M[free].tocsr()
        self._m_fd = M[free][:, diri].tocsr()
        self._a_fd = A[free][:, diri].tocsr()
        self._dir_coords = space.dof_coords[diri]
        self._free_coords = space.dof_coords[free]
        self.n_free = space.n_free
        self._f_zero = problem.f is _zero_data
        self._g_zero = problem.g is _zero_data

    def initial_values(self) -> dict:
        """Initial free-DOF values of u, v and their collocation start-up
        derivatives; the lifting vanishes at free nodes, so these are plain
        point evaluations."""
        pts = self._free_coords
        return {
            "u": np.asarray(self.problem.u0(pts), dtype=float),
            "v": np.asarray(self.problem.v0(pts), dtype=float),
            "dtv": np.asarray(self.problem.dtv0(pts), dtype=float),
            "dt2v": np.asarray(self.problem.dt2v0(pts), dtype=float),
        }

    def _f_product(self, t: float, s: int) -> np.ndarray:
        fvals = interpolate(self.space, lambda pts: self.problem.f(pts, t, s))
        return self._m_rows @ fvals

    def slab(self, t0: float, tau: float, degree: int) -> SlabData:
        l = (degree - 1) // 2
        times = [t0] * (l + 1) + [t0 + tau] * (l + 1)
        orders = list(range(l + 1)) * 2
        zero = np.zeros(self.n_free)

        f_m, vd_m, ud_a = [], [], []
        for t, s in zip(times, orders):
            w = tau ** s
            f_m.append(zero if self._f_zero else w * self._f_product(t, s))
            if self._g_zero or len(self._dir_coords) == 0:
                vd_m.append(zero)
                ud_a.append(zero)
            else:
                gs = np.asarray(self.problem.g(self._dir_coords, t, s), dtype=float)
                gs1 = np.asarray(self.problem.g(self._dir_coords, t, s + 1), dtype=float)
                ud_a.append(w * (self._a_fd @ gs))
                vd_m.append(w * (self._m_fd @ gs1))
        return SlabData(f_m=f_m, vd_m=vd_m, ud_a=ud_a)

    def sample(self, t: float) -> tuple:
        """Pointwise data products (M f, M d_t v^D, A u^D) at one time, used
        by the quadrature-in-time baseline scheme."""
        zero = np.zeros(self.n_free)
        fm = zero if self._f_zero else self._f_product(t, 0)
        if self._g_zero or len(self._dir_coords) == 0:
            return fm, zero, zero
        g0 = np.asarray(self.problem.g(self._dir_coords, t, 0), dtype=float)
        g2 = np.asarray(self.problem.g(self._dir_coords, t, 2), dtype=float)
        return fm, self._m_fd @ g2, self._a_fd @ g0
