"""One-step advance of the C^2 quintic Galerkin-collocation scheme.

The hand-off fixes six of the twelve Hermite coefficient vectors per slab;
eliminating v3 = u4/tau and v4 = u5/tau (endpoint collocation of the
first-order system for s = 1, 2) leaves x = (u3, u4, v5, u5) and the block
system

    [ A          0            0        M/tau^2 ] [u3]   [ r_a ]
    [ 0          A          M/tau        0     ] [u4] = [ r_b ]
    [ M        -M/2      -tau/120 M    M/10    ] [v5]   [ r_c ]
    [ tau/2 A  M/tau - tau/10 A  0   tau/120 A ] [u5]   [ r_d ]

Block elimination with only mass-matrix inverses condenses this to

    (14400 M + 720 tau^2 A + 24 tau^4 A M^-1 A + tau^6 A M^-1 A M^-1 A) u4 = b_r.

The CG preconditioner ignores the tau^6 remainder; its weight mu is tuned
at setup by minimizing the spectral spread of the preconditioned operator
(the operator pencil is a polynomial in M^-1 A, so a 1-d scan over the
generalized eigenvalue range is exact).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import linalg
from .linalg import DirectSolver, LinOp, SolveFailure, SolveReport
from .slabdata import ProblemData, SlabData, zero_slab_data
from .timebasis import QUINTIC, SlabCoeffs

_W = QUINTIC.integrals()  # (1/2, 1/10, 1/120, 1/2, -1/10, 1/120)


@dataclass(frozen=True)
class StepState2:
    """Hand-off data at a slab start: value, tau-scaled first and second
    derivative coefficients of u and v."""

    index: int
    t: float
    tau: float
    u_val: np.ndarray
    u_der: np.ndarray
    u_der2: np.ndarray
    v_val: np.ndarray
    v_der: np.ndarray
    v_der2: np.ndarray


def init_state2(problem, space, tau: float, M=None, A=None) -> StepState2:
    """Start-up needs d_t v(0) and d_t^2 v(0); the problem supplies both
    analytically (wave equation and its time derivative at t = 0)."""
    if M is None or A is None:
        M = space.mass
        A = sp.csr_matrix(M.shape)
    init = ProblemData(problem, space, M, A).initial_values()
    return StepState2(0, 0.0, tau,
                      u_val=init["u"], u_der=tau * init["v"],
                      u_der2=tau ** 2 * init["dtv"],
                      v_val=init["v"], v_der=tau * init["dtv"],
                      v_der2=tau ** 2 * init["dt2v"])


def advance2(coeffs: SlabCoeffs, next_tau: float) -> StepState2:
    r = next_tau / coeffs.tau
    return StepState2(coeffs.index + 1, coeffs.t_end, next_tau,
                      u_val=coeffs.u[3].copy(), u_der=r * coeffs.u[4],
                      u_der2=r ** 2 * coeffs.u[5],
                      v_val=coeffs.v[3].copy(), v_der=r * coeffs.v[4],
                      v_der2=r ** 2 * coeffs.v[5])


def _rhs(state: StepState2, data: SlabData, M, A) -> tuple:
    tau = state.tau
    u0, u1, u2 = state.u_val, state.u_der, state.u_der2
    v0, v1, v2 = state.v_val, state.v_der, state.v_der2
    fm, vdm, uda = data.f_m, data.vd_m, data.ud_a
    r_a = fm[3] - vdm[4] / tau - uda[3]
    r_b = fm[4] - vdm[5] / tau - uda[4]
    r_c = M @ (u0 + tau * (v0 / 2.0 + v1 / 10.0 + v2 / 120.0))
    fsum = sum(w * v for w, v in zip(_W, fm))
    dsum = sum(w * v for w, v in zip(_W, uda))
    r_d = (M @ v0 + vdm[0] - vdm[3] + tau * fsum - tau * dsum
           - A @ (tau * (u0 / 2.0 + u1 / 10.0 + u2 / 120.0)))
    return r_a, r_b, r_c, r_d


def assemble_block2(state: StepState2, data: SlabData, M, A):
    """Assembled sparse block system (S, b) over x = (u3, u4, v5, u5)."""
    tau = state.tau
    S = sp.bmat([
        [A, None, None, M / tau ** 2],
        [None, A, M / tau, None],
        [M, -0.5 * M, -(tau / 120.0) * M, 0.1 * M],
        [(tau / 2.0) * A, M / tau - (tau / 10.0) * A, None, (tau / 120.0) * A],
    ], format="csr")
    r_a, r_b, r_c, r_d = _rhs(state, data, M, A)
    return S, np.concatenate([r_a, r_b, r_c, r_d])


def _coeffs_from(state: StepState2, u3, u4, u5, v3, v4, v5) -> SlabCoeffs:
    return SlabCoeffs(state.index, state.t, state.tau,
                      u=np.stack([state.u_val, state.u_der, state.u_der2, u3, u4, u5]),
                      v=np.stack([state.v_val, state.v_der, state.v_der2, v3, v4, v5]),
                      basis=QUINTIC)


def tune_condensed_mu(M, A, tau: float, m_lu: DirectSolver | None = None,
                      fallback: float = linalg.MU_DEFAULT) -> float:
    """Spread-minimizing preconditioner weight for the quintic condensed
    system, via the scalar symbol over the generalized spectrum of (A, M)."""
    try:
        m_lu = m_lu or DirectSolver(M)
        rng = np.random.default_rng(1234)
        x = rng.standard_normal(M.shape[0])
        lam = 0.0
        for _ in range(30):  # power iteration on M^-1 A
            y = m_lu.solve(A @ x)
            lam = np.linalg.norm(y) / np.linalg.norm(x)
            x = y / np.linalg.norm(y)
        s = np.concatenate([[0.0], np.geomspace(1e-8, 1.0, 400)]) * (tau ** 2 * lam / 4.0)
        num = 14400.0 + 2880.0 * s + 384.0 * s ** 2 + 64.0 * s ** 3
        mus = np.geomspace(1.0, 1e4, 300)
        rho = num[None, :] / (mus[:, None] + s[None, :]) ** 2
        spread = rho.max(axis=1) / rho.min(axis=1)
        return float(mus[int(np.argmin(spread))])
    except Exception:
        return fallback


class Gcc2Stepper:
    """Caches factorizations across steps; equal-size steps reuse them."""

    def __init__(self, M, A, data_source=None, solver: str = "condensed",
                 rel_tol: float = 1e-10, max_iter: int = 4000,
                 mu: float | None = None, gmres_restart: int = 60):
        self.M = M.tocsr()
        self.A = A.tocsr()
        self.data_source = data_source
        self.solver = solver
        self.rel_tol = rel_tol
        self.max_iter = max_iter
        self.mu = mu  # None -> tuned on first use
        self.gmres_restart = gmres_restart
        self._m_lu = None
        self._cache_tau = None
        self._k_lu = None
        self._s_lu = None
        self.degree = 5

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
            if self.mu is None:
                self.mu = tune_condensed_mu(self.M, self.A, tau, self.m_lu)
            self._k_lu = DirectSolver(self.mu * self.M + (tau ** 2 / 4.0) * self.A)
        return self._k_lu

    def _slab_data(self, state: StepState2) -> SlabData:
        if self.data_source is None:
            return zero_slab_data(self.M.shape[0], self.degree)
        return self.data_source.slab(state.t, state.tau, self.degree)

    def condensed_operator(self, tau: float) -> LinOp:
        msolve = self.m_lu.solve
        M, A = self.M, self.A

        def apply(x):
            y1 = A @ x
            y2 = A @ msolve(y1)
            y3 = A @ msolve(y2)
            return (14400.0 * (M @ x) + 720.0 * tau ** 2 * y1
                    + 24.0 * tau ** 4 * y2 + tau ** 6 * y3)

        return LinOp(M.shape[0], apply)

    def condensed_precond(self, tau: float) -> LinOp:
        ksolve = self._k_solver(tau).solve
        M = self.M
        return LinOp(M.shape[0], lambda r: ksolve(M @ ksolve(r)))

    def _condensed_rhs(self, tau, r_a, r_b, r_c, r_d):
        msolve = self.m_lu.solve
        A = self.A
        g = r_c + (tau ** 2 / 120.0) * r_b - (tau ** 2 / 10.0) * r_a
        h = r_d - (tau ** 3 / 120.0) * (A @ msolve(r_a))
        amg = A @ msolve(g)
        term = (h - (tau ** 2 / 10.0) * (A @ msolve(h))
                - (tau / 2.0) * (amg - (tau ** 2 / 60.0) * (A @ msolve(amg))))
        return 14400.0 * tau * term

    def _postprocess(self, tau, u4, r_a, r_b, r_c, r_d):
        msolve = self.m_lu.solve
        M, A = self.M, self.A
        v5 = tau * msolve(r_b - A @ u4)
        z = msolve(r_c + 0.5 * (M @ u4) + (tau / 120.0) * (M @ v5))
        rd_p = r_d - (M @ u4) / tau + (tau / 10.0) * (A @ u4)
        au5 = 12.0 * (A @ z) - (24.0 / tau) * rd_p
        u5 = tau ** 2 * msolve(r_a - A @ z + au5 / 10.0)
        u3 = z - u5 / 10.0
        v3 = u4 / tau
        v4 = u5 / tau
        return u3, u5, v3, v4, v5

    def solve_condensed(self, state: StepState2, data: SlabData | None = None
                        ) -> tuple[SlabCoeffs, SolveReport]:
        tau = state.tau
        data = data if data is not None else self._slab_data(state)
        r_a, r_b, r_c, r_d = _rhs(state, data, self.M, self.A)
        b_r = self._condensed_rhs(tau, r_a, r_b, r_c, r_d)
        u4, report = linalg.cg_solve(self.condensed_operator(tau), b_r,
                                     precond=self.condensed_precond(tau),
                                     rel_tol=self.rel_tol, max_iter=self.max_iter)
        if not report.converged:
            raise SolveFailure(f"condensed CG failed at t={state.t}", report)
        u3, u5, v3, v4, v5 = self._postprocess(tau, u4, r_a, r_b, r_c, r_d)
        return _coeffs_from(state, u3, u4, u5, v3, v4, v5), report

    def block_precond(self, tau: float) -> LinOp:
        pc = self.condensed_precond(tau)
        n = self.M.shape[0]

        def apply(r):
            r_a, r_b, r_c, r_d = np.split(r, 4)
            u4 = pc @ self._condensed_rhs(tau, r_a, r_b, r_c, r_d)
            u3, u5, v3, v4, v5 = self._postprocess(tau, u4, r_a, r_b, r_c, r_d)
            return np.concatenate([u3, u4, v5, u5])

        return LinOp(4 * n, apply)

    def solve_block(self, state: StepState2, data: SlabData | None = None,
                    strategy: str = "direct") -> tuple[SlabCoeffs, SolveReport]:
        tau = state.tau
        data = data if data is not None else self._slab_data(state)
        S, b = assemble_block2(state, data, self.M, self.A)
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
        u3, u4, v5, u5 = np.split(x, 4)
        return _coeffs_from(state, u3, u4, u5, u4 / tau, u5 / tau, v5), report

    def step(self, state: StepState2) -> tuple[SlabCoeffs, SolveReport]:
        if self.solver == "condensed":
            return self.solve_condensed(state)
        if self.solver in ("block-direct", "direct"):
            return self.solve_block(state, strategy="direct")
        if self.solver in ("block-gmres", "gmres"):
            return self.solve_block(state, strategy="gmres")
        raise ValueError(f"unknown solver {self.solver!r}")


def solve_condensed2(state, data, M, A, **kw):
    return Gcc2Stepper(M, A, **kw).solve_condensed(state, data)


def solve_block2(state, data, M, A, strategy="direct", **kw):
    return Gcc2Stepper(M, A, **kw).solve_block(state, data, strategy=strategy)
