"""Krylov solvers, cached sparse factorizations and the CG preconditioner.

The condensed slab systems are symmetric positive definite and solved by
preconditioned CG; the block slab systems are non-symmetric and solved
either directly (cached LU, reused across equal-size steps) or by
restarted GMRES.  Inner mass/stiffness solves use cached factorizations,
which at desk scale replace the multigrid inner solves of large runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

# default preconditioner weight for the C^1 condensed system
MU_DEFAULT = float(np.sqrt(11.0 / 2.0))


class SolveFailure(RuntimeError):
    """Iterative or direct solve did not produce a usable solution."""

    def __init__(self, message: str, report: "SolveReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    relative_residual: float
    converged: bool


@dataclass(frozen=True)
class LinOp:
    """Square linear operator given by an apply callback."""

    n: int
    apply: Callable[[np.ndarray], np.ndarray]

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return self.apply(x)


def aslinop(op) -> LinOp:
    if isinstance(op, LinOp):
        return op
    if sp.issparse(op):
        return LinOp(op.shape[0], lambda x, m=op: m @ x)
    if isinstance(op, np.ndarray):
        return LinOp(op.shape[0], lambda x, m=op: m @ x)
    raise TypeError(f"cannot interpret {type(op)!r} as a linear operator")


def identity_op(n: int) -> LinOp:
    return LinOp(n, lambda x: x)


class DirectSolver:
    """Cached sparse LU; the factorization is reused for every solve."""

    def __init__(self, matrix):
        matrix = sp.csc_matrix(matrix)
        if matrix.shape[0] != matrix.shape[1]:
            raise ValueError("direct solver needs a square matrix")
        try:
            self._lu = spla.splu(matrix)
        except RuntimeError as exc:  # SuperLU signals singularity this way
            raise SolveFailure(f"sparse factorization failed: {exc}") from exc
        self.n = matrix.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = self._lu.solve(np.asarray(b, dtype=float))
        if not np.all(np.isfinite(x)):
            raise SolveFailure("direct solve produced non-finite values")
        return x

    def as_linop(self) -> LinOp:
        return LinOp(self.n, self.solve)


def direct_solve(matrix, b: np.ndarray) -> np.ndarray:
    return DirectSolver(matrix).solve(b)


def cg_solve(op, b: np.ndarray, precond=None, rel_tol: float = 1e-10,
             max_iter: int = 1000) -> tuple[np.ndarray, SolveReport]:
    """Preconditioned conjugate gradients for SPD ``op``.

    Convergence is declared on the true residual: ||b - op x|| <= rel_tol ||b||.
    """
    op = aslinop(op)
    pre = aslinop(precond) if precond is not None else identity_op(op.n)
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport(0, 0.0, True)

    x = np.zeros_like(b)
    r = b.copy()
    z = pre @ r
    p = z.copy()
    rz = r @ z
    it = 0
    for it in range(1, max_iter + 1):
        ap = op @ p
        pap = p @ ap
        if not np.isfinite(pap) or pap <= 0.0:
            raise SolveFailure("CG breakdown: operator not SPD on this subspace",
                               SolveReport(it, np.nan, False))
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        res = np.linalg.norm(r) / bnorm
        if not np.isfinite(res):
            raise SolveFailure("CG residual is not finite",
                               SolveReport(it, res, False))
        if res <= rel_tol:
            return x, SolveReport(it, res, True)
        z = pre @ r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = float(np.linalg.norm(b - (op @ x)) / bnorm)
    return x, SolveReport(it, res, res <= rel_tol)


def gmres_solve(op, b: np.ndarray, precond=None, rel_tol: float = 1e-10,
                restart: int = 60, max_iter: int = 2000
                ) -> tuple[np.ndarray, SolveReport]:
    """Restarted GMRES with right preconditioning.

    Right preconditioning keeps the monitored residual equal to the true
    residual of the original system.
    """
    op = aslinop(op)
    pre = aslinop(precond) if precond is not None else identity_op(op.n)
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport(0, 0.0, True)

    x = np.zeros_like(b)
    total = 0
    while total < max_iter:
        r = b - (op @ x)
        beta = np.linalg.norm(r)
        if not np.isfinite(beta):
            raise SolveFailure("GMRES residual is not finite",
                               SolveReport(total, np.nan, False))
        if beta / bnorm <= rel_tol:
            return x, SolveReport(total, beta / bnorm, True)

        m = min(restart, max_iter - total)
        V = np.empty((m + 1, op.n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k = 0
        for k in range(m):
            w = op @ (pre @ V[k])
            for i in range(k + 1):  # modified Gram-Schmidt
                H[i, k] = V[i] @ w
                w -= H[i, k] * V[i]
            hnext = np.linalg.norm(w)
            H[k + 1, k] = hnext
            for i in range(k):
                hi = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = hi
            rho = np.hypot(H[k, k], H[k + 1, k])
            if rho == 0.0:
                raise SolveFailure("GMRES breakdown",
                                   SolveReport(total + k + 1, np.nan, False))
            cs[k], sn[k] = H[k, k] / rho, H[k + 1, k] / rho
            H[k, k] = rho
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            total += 1
            if (abs(g[k + 1]) / bnorm <= rel_tol or k == m - 1
                    or total >= max_iter or hnext == 0.0):
                k += 1
                break
            V[k + 1] = w / hnext
        # solve the small triangular system and update x
        y = np.zeros(k)
        for i in range(k - 1, -1, -1):
            y[i] = (g[i] - H[i, i + 1:k] @ y[i + 1:k]) / H[i, i]
        x = x + (pre @ (V[:k].T @ y))
        res = float(np.linalg.norm(b - (op @ x)) / bnorm)
        if res <= rel_tol:
            return x, SolveReport(total, res, True)
    res = float(np.linalg.norm(b - (op @ x)) / bnorm)
    return x, SolveReport(total, res, res <= rel_tol)


def make_precond_P(M, A, tau: float, mu: float = MU_DEFAULT,
                   inner_rel_tol: float = 1e-12,
                   factorized: bool = True) -> LinOp:
    """Preconditioner P = K_mu M^-1 K_mu with K_mu = mu M + (tau^2/4) A.

    The returned operator applies P^-1 r = K^-1 (M (K^-1 r)).  Inner solves
    use cached factorizations by default, or CG to ``inner_rel_tol``.
    """
    if tau <= 0.0 or mu <= 0.0:
        raise ValueError("tau and mu must be positive")
    K = (mu * M + (tau ** 2 / 4.0) * A).tocsc()
    if factorized:
        k_inv = DirectSolver(K).solve
    else:
        def k_inv(r, _K=K.tocsr()):
            x, rep = cg_solve(_K, r, rel_tol=inner_rel_tol, max_iter=10000)
            if not rep.converged:
                raise SolveFailure("preconditioner inner solve failed", rep)
            return x

    def apply(r: np.ndarray) -> np.ndarray:
        return k_inv(M @ k_inv(r))

    return LinOp(M.shape[0], apply)
