"""One-step advance of the C^1 cubic Galerkin-collocation scheme.

Per slab the scheme couples two variational conditions (tested against
constants in time) with two endpoint collocation conditions.  After the
left-endpoint hand-off the unknowns are x = (v2, v3, u2, u3), where indices
2/3 are the value / scaled-derivative Hermite slots at the slab end.  The
block system is

    [ -M        0        0      M/tau ] [v2]   [ 0  ]
    [  0      M/tau      A        0   ] [v3] = [ r2 ]
    [ -tau/2 M tau/12 M  M        0   ] [u2]   [ r3 ]
    [  M        0     tau/2 A -tau/12 A] [u3]   [ r4 ]

which Gaussian block elimination condenses to the symmetric positive
definite system

    (M + tau^2/12 A + tau^4/144 A M^-1 A) u2 = b_r,

solved by CG with the preconditioner P = K_mu M^-1 K_mu; the remaining
unknowns follow by cheap post-processing.  Alternatively the block system
is solved as assembled (cached direct factorization, or GMRES with an
elimination-based preconditioner).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import linalg
from .linalg import DirectSolver, LinOp, SolveFailure, SolveReport
from .slabdata import ProblemData, SlabData, zero_slab_data
from .timebasis import CUBIC, SlabCoeffs

# integrals of the cubic Hermite basis over [0, 1]
_W = CUBIC.integrals()  # (1/2, 1/12, 1/2, -1/12)


@dataclass(frozen=True)
class StepState:
    """Hermite hand-off data at the start of a slab of length ``tau``:
    value and tau-scaled first-derivative coefficients of u and v."""

    index: int
    t: float
    tau: float
    u_val: np.ndarray
    u_der: np.ndarray
    v_val: np.ndarray
    v_der: np.ndarray


def init_state(problem, space, tau: float, M=None, A=None) -> StepState:
    """Start-up state at t = 0; d_t v(0) comes from the problem's analytic
    evaluation of the wave equation at the initial time."""
    if M is None or A is None:
        M = space.mass
        A = sp.csr_matrix(M.shape)  # only data products needed here
    init = ProblemData(problem, space, M, A).initial_values()
    return StepState(0, 0.0, tau,
                     u_val=init["u"], u_der=tau * init["v"],
                     v_val=init["v"], v_der=tau * init["dtv"])


def advance(coeffs: SlabCoeffs, next_tau: float) -> StepState:
    """Left-endpoint hand-off: copy the end slots, rescaling derivative
    coefficients when the step size changes."""
    r = next_tau / coeffs.tau
    return StepState(coeffs.index + 1, coeffs.t_end, next_tau,
                     u_val=coeffs.u[2].copy(), u_der=r * coeffs.u[3],
                     v_val=coeffs.v[2].copy(), v_der=r * coeffs.v[3])


def _rhs(state: StepState, data: SlabData, M, A) -> tuple:
    tau = state.tau
    u0, u1, v0, v1 = state.u_val, state.u_der, state.v_val, state.v_der
    fm, vdm, uda = data.f_m, data.vd_m, data.ud_a
    r2 = fm[2] - vdm[3] / tau - uda[2]
    r3 = M @ (u0 + (tau / 2.0) * v0 + (tau / 12.0) * v1)
    r4 = (M @ v0 - A @ ((tau / 2.0) * u0 + (tau / 12.0) * u1)
          + vdm[0] - vdm[2]
          + tau * (_W[0] * fm[0] + _W[1] * fm[1] + _W[2] * fm[2] + _W[3] * fm[3])
          - tau * (_W[0] * uda[0] + _W[1] * uda[1] + _W[2] * uda[2] + _W[3] * uda[3]))
    return r2, r3, r4


def assemble_block(state: StepState, data: SlabData, M, A):
    """Assembled sparse block system (S, b) over x = (v2, v3, u2, u3)."""
    tau = state.tau
    n = M.shape[0]
    S = sp.bmat([
        [-M, None, None, M / tau],
        [None, M / tau, A, None],
        [-(tau / 2.0) * M, (tau / 12.0) * M, M, None],
        [M, None, (tau / 2.0) * A, -(tau / 12.0) * A],
    ], format="csr")
    r2, r3, r4 = _rhs(state, data, M, A)
    b = np.concatenate([np.zeros(n), r2, r3, r4])
    return S, b


def _coeffs_from(state: StepState, u2, u3, v2, v3) -> SlabCoeffs:
    return SlabCoeffs(state.index, state.t, state.tau,
                      u=np.stack([state.u_val, state.u_der, u2, u3]),
                      v=np.stack([state.v_val, state.v_der, v2, v3]),
                      basis=CUBIC)


class Gcc1Stepper:
    """Caches factorizations across steps; equal-size steps reuse them."""

    def __init__(self, M, A, data_source=None, solver: str = "condensed",
                 rel_tol: float = 1e-10, max_iter: int = 2000,
                 mu: float = linalg.MU_DEFAULT, gmres_restart: int = 60):
        self.M = M.tocsr()
        self.A = A.tocsr()
        self.data_source = data_source
        self.solver = solver
        self.rel_tol = rel_tol
        self.max_iter = max_iter
        self.mu = mu
        self.gmres_restart = gmres_restart
        self._m_lu = None
        self._cache_tau = None
        self._k_lu = None       # LU of K_mu, per tau
        self._s_lu = None       # LU of the block system, per tau
        self.degree = 3

    @property
    def m_lu(self) -> DirectSolver:
        if self._m_lu is None:
            self._m_lu = DirectSolver(self.M)
        return self._m_lu

    def _tau_cache(self, tau: float):
        if self._cache_tau is None or tau != self._cache_tau:
            self._cache_tau = tau
            self._k_lu = None
            self._s_lu = None

    def _k_solver(self, tau: float) -> DirectSolver:
        self._tau_cache(tau)
        if self._k_lu is None:
            self._k_lu = DirectSolver(self.mu * self.M + (tau ** 2 / 4.0) * self.A)
        return self._k_lu

    def _slab_data(self, state: StepState) -> SlabData:
        if self.data_source is None:
            return zero_slab_data(self.M.shape[0], self.degree)
        return self.data_source.slab(state.t, state.tau, self.degree)

    def condensed_operator(self, tau: float) -> LinOp:
        msolve = self.m_lu.solve
        M, A = self.M, self.A

        def apply(x):
            ax = A @ x
            return M @ x + (tau ** 2 / 12.0) * ax + (tau ** 4 / 144.0) * (A @ msolve(ax))

        return LinOp(M.shape[0], apply)

    def condensed_precond(self, tau: float) -> LinOp:
        ksolve = self._k_solver(tau).solve
        M = self.M
        return LinOp(M.shape[0], lambda r: ksolve(M @ ksolve(r)))

    def _condensed_rhs(self, tau, r2, r3, r4, r1=None):
        msolve = self.m_lu.solve
        a = tau ** 2 / 12.0
        r4p = r4 if r1 is None else r4 + a * (self.A @ msolve(r1))
        return (r3 + (tau / 2.0) * r4p - a * r2
                + a * (self.A @ msolve(a * r2 - r3)))

    def _postprocess(self, tau, u2, r2, r3, r1=None):
        msolve = self.m_lu.solve
        v3 = tau * msolve(r2 - self.A @ u2)
        v2 = (2.0 / tau) * u2 + v3 / 6.0 - (2.0 / tau) * msolve(r3)
        u3 = tau * v2 if r1 is None else tau * (v2 + msolve(r1))
        return v2, v3, u3

    def solve_condensed(self, state: StepState, data: SlabData | None = None
                        ) -> tuple[SlabCoeffs, SolveReport]:
        tau = state.tau
        data = data if data is not None else self._slab_data(state)
        r2, r3, r4 = _rhs(state, data, self.M, self.A)
        b_r = self._condensed_rhs(tau, r2, r3, r4)
        u2, report = linalg.cg_solve(self.condensed_operator(tau), b_r,
                                     precond=self.condensed_precond(tau),
                                     rel_tol=self.rel_tol, max_iter=self.max_iter)
        if not report.converged:
            raise SolveFailure(f"condensed CG failed at t={state.t}", report)
        v2, v3, u3 = self._postprocess(tau, u2, r2, r3)
        return _coeffs_from(state, u2, u3, v2, v3), report

    def block_precond(self, tau: float) -> LinOp:
        """Approximate inverse of the block system: exact elimination with
        the Schur complement solve replaced by the CG preconditioner."""
        pc = self.condensed_precond(tau)
        n = self.M.shape[0]

        def apply(r):
            r1, r2, r3, r4 = np.split(r, 4)
            b_r = self._condensed_rhs(tau, r2, r3, r4, r1=r1)
            u2 = pc @ b_r
            v2, v3, u3 = self._postprocess(tau, u2, r2, r3, r1=r1)
            return np.concatenate([v2, v3, u2, u3])

        return LinOp(4 * n, apply)

    def solve_block(self, state: StepState, data: SlabData | None = None,
                    strategy: str = "direct") -> tuple[SlabCoeffs, SolveReport]:
        tau = state.tau
        data = data if data is not None else self._slab_data(state)
        S, b = assemble_block(state, data, self.M, self.A)
        if strategy == "direct":
            self._tau_cache(tau)
            if self._s_lu is None:
                self._s_lu = DirectSolver(S)
            x = self._s_lu.solve(b)
            res = np.linalg.norm(b - S @ x) / max(np.linalg.norm(b), 1e-300)
            report = SolveReport(1, float(res), True)
        elif strategy == "gmres":
            x, report = linalg.gmres_solve(S, b, precond=self.block_precond(tau),
                                           rel_tol=self.rel_tol,
                                           restart=self.gmres_restart,
                                           max_iter=self.max_iter)
            if not report.converged:
                raise SolveFailure(f"block GMRES failed at t={state.t}", report)
        else:
            raise ValueError(f"unknown block strategy {strategy!r}")
        v2, v3, u2, u3 = np.split(x, 4)
        return _coeffs_from(state, u2, u3, v2, v3), report

    def step(self, state: StepState) -> tuple[SlabCoeffs, SolveReport]:
        if self.solver == "condensed":
            return self.solve_condensed(state)
        if self.solver in ("block-direct", "direct"):
            return self.solve_block(state, strategy="direct")
        if self.solver in ("block-gmres", "gmres"):
            return self.solve_block(state, strategy="gmres")
        raise ValueError(f"unknown solver {self.solver!r}")


def solve_condensed(state, data, M, A, **kw):
    return Gcc1Stepper(M, A, **kw).solve_condensed(state, data)


def solve_block(state, data, M, A, strategy="direct", **kw):
    return Gcc1Stepper(M, A, **kw).solve_block(state, data, strategy=strategy)
