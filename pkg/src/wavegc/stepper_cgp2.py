"""Continuous Petrov-Galerkin baseline of quadratic polynomials in time.

Trial functions are continuous piecewise quadratics (Lagrange coefficients
at the slab endpoints and midpoint), tested against piecewise linears; time
integrals use the 3-point Gauss rule and the forcing is sampled at the
quadrature times.  The scheme is C^0 but generically not C^1 at the slab
junctions, which is exactly the property the step-size robustness study
contrasts against the collocation schemes.  Each step solves a coupled
system for (u1, u2, v1, v2), directly or by GMRES.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import linalg
from .fespace import gauss_rule_01, lagrange_eval_1d
from .linalg import DirectSolver, LinOp, SolveFailure, SolveReport
from .timebasis import QUAD_LAGRANGE, SlabCoeffs

_NODES = np.array([0.0, 0.5, 1.0])
_QT, _QW = gauss_rule_01(3)
_LVALS = lagrange_eval_1d(_NODES, _QT)           # (3 trial, 3 qp)
_LDERS = lagrange_eval_1d(_NODES, _QT, deriv=1)
_TVALS = np.vstack([np.ones(3), _QT])            # test basis {1, t} at qp

# D[i, l] = int l_l' psi_i dt,  W[i, l] = int l_l psi_i dt  on [0, 1]
_D = (_TVALS * _QW) @ _LDERS.T
_WQ = (_TVALS * _QW) @ _LVALS.T


@dataclass(frozen=True)
class CgpState:
    """End-of-slab values of (u, v) carried to the next slab."""

    index: int
    t: float
    u_val: np.ndarray
    v_val: np.ndarray


def init_cgp_state(problem, space, M=None) -> CgpState:
    from .slabdata import ProblemData
    if M is None:
        M = space.mass
    init = ProblemData(problem, space, M, sp.csr_matrix(M.shape)).initial_values()
    return CgpState(0, 0.0, init["u"], init["v"])


def advance_cgp(coeffs: SlabCoeffs) -> CgpState:
    return CgpState(coeffs.index + 1, coeffs.t_end,
                    coeffs.u[2].copy(), coeffs.v[2].copy())


class Cgp2Stepper:
    """Caches the coupled-system factorization across equal-size steps."""

    def __init__(self, M, A, data_source=None, solver: str = "block-direct",
                 rel_tol: float = 1e-10, max_iter: int = 4000,
                 gmres_restart: int = 60):
        self.M = M.tocsr()
        self.A = A.tocsr()
        self.data_source = data_source
        self.solver = solver
        self.rel_tol = rel_tol
        self.max_iter = max_iter
        self.gmres_restart = gmres_restart
        self._cache_tau = None
        self._s_lu = None
        self._s_ilu = None

    def _system(self, tau: float):
        M, A = self.M, self.A
        rows = []
        for i in range(2):
            rows.append([_D[i, 1] * M, _D[i, 2] * M,
                         -tau * _WQ[i, 1] * M, -tau * _WQ[i, 2] * M])
        for i in range(2):
            rows.append([tau * _WQ[i, 1] * A, tau * _WQ[i, 2] * A,
                         _D[i, 1] * M, _D[i, 2] * M])
        return sp.bmat(rows, format="csr")

    def _rhs(self, state: CgpState, tau: float):
        M, A = self.M, self.A
        u0, v0 = state.u_val, state.v_val
        n = M.shape[0]
        if self.data_source is None:
            samples = [(np.zeros(n), np.zeros(n), np.zeros(n))] * len(_QT)
        else:
            samples = [self.data_source.sample(state.t + q * tau) for q in _QT]
        b = []
        for i in range(2):
            b.append(-_D[i, 0] * (M @ u0) + tau * _WQ[i, 0] * (M @ v0))
        for i in range(2):
            load = sum(wq * psi * (fm - vdm - uda)
                       for wq, psi, (fm, vdm, uda)
                       in zip(_QW, _TVALS[i], samples))
            b.append(tau * load - _D[i, 0] * (M @ v0) - tau * _WQ[i, 0] * (A @ u0))
        return np.concatenate(b)

    def step(self, state: CgpState, tau: float) -> tuple[SlabCoeffs, SolveReport]:
        S = self._system(tau)
        b = self._rhs(state, tau)
        if self.solver in ("block-direct", "direct", "condensed"):
            if self._cache_tau != tau or self._s_lu is None:
                self._cache_tau = tau
                self._s_lu = DirectSolver(S)
                self._s_ilu = None
            x = self._s_lu.solve(b)
            report = SolveReport(1, 0.0, True)
        elif self.solver in ("block-gmres", "gmres"):
            if self._cache_tau != tau or self._s_ilu is None:
                self._cache_tau = tau
                self._s_ilu = spla.spilu(S.tocsc(), drop_tol=1e-5, fill_factor=20)
                self._s_lu = None
            pre = LinOp(S.shape[0], self._s_ilu.solve)
            x, report = linalg.gmres_solve(S, b, precond=pre,
                                           rel_tol=self.rel_tol,
                                           restart=self.gmres_restart,
                                           max_iter=self.max_iter)
            if not report.converged:
                raise SolveFailure(f"cgp2 GMRES failed at t={state.t}", report)
        else:
            raise ValueError(f"unknown solver {self.solver!r}")
        u1, u2, v1, v2 = np.split(x, 4)
        coeffs = SlabCoeffs(state.index, state.t, tau,
                            u=np.stack([state.u_val, u1, u2]),
                            v=np.stack([state.v_val, v1, v2]),
                            basis=QUAD_LAGRANGE)
        return coeffs, report


def cgp2_step(state: CgpState, tau: float, data, M, A, **kw):
    stepper = Cgp2Stepper(M, A, data_source=data, **kw)
    return stepper.step(state, tau)
