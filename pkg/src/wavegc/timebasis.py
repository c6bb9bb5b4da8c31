"""Hermite-type temporal bases on [0, 1] and slab coefficient containers.

The cubic basis is dual to endpoint values and first derivatives, the
quintic one to values and first two derivatives.  Scaling convention for a
slab of length tau: coefficient s (0 <= s <= l) stores tau^s * d^s/dt^s w
at the left endpoint, coefficient l+1+s the same at the right endpoint.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

# polynomial coefficients, ascending powers of the reference coordinate
_CUBIC = np.array([
    [1.0, 0.0, -3.0, 2.0],
    [0.0, 1.0, -2.0, 1.0],
    [0.0, 0.0, 3.0, -2.0],
    [0.0, 0.0, -1.0, 1.0],
])

_QUINTIC = np.array([
    [1.0, 0.0, 0.0, -10.0, 15.0, -6.0],
    [0.0, 1.0, 0.0, -6.0, 8.0, -3.0],
    [0.0, 0.0, 0.5, -1.5, 1.5, -0.5],
    [0.0, 0.0, 0.0, 10.0, -15.0, 6.0],
    [0.0, 0.0, 0.0, -4.0, 7.0, -3.0],
    [0.0, 0.0, 0.0, 0.5, -1.0, 0.5],
])


@dataclass(frozen=True)
class HermiteBasis:
    degree: int
    coeffs: np.ndarray  # (degree+1, degree+1), row = basis member

    @property
    def smoothness(self) -> int:
        return (self.degree - 1) // 2

    @property
    def n_funcs(self) -> int:
        return self.degree + 1

    def integrals(self) -> np.ndarray:
        """Integrals of all members over [0, 1] (the variational weights)."""
        k = np.arange(self.degree + 1)
        return self.coeffs @ (1.0 / (k + 1.0))

    def eval_matrix(self, that: np.ndarray, deriv: int = 0) -> np.ndarray:
        """All members (reference derivative ``deriv``) at points ``that``.

        Returns shape (len(that), degree+1).
        """
        that = np.atleast_1d(np.asarray(that, dtype=float))
        out = np.empty((len(that), self.n_funcs))
        for i in range(self.n_funcs):
            c = np.polynomial.polynomial.polyder(self.coeffs[i], deriv) \
                if deriv else self.coeffs[i]
            out[:, i] = np.polynomial.polynomial.polyval(that, c)
        return out


CUBIC = HermiteBasis(3, _CUBIC)
QUINTIC = HermiteBasis(5, _QUINTIC)

# quadratic Lagrange basis at nodes {0, 1/2, 1}; shares the evaluation
# machinery (coefficients are plain nodal values, no tau scaling)
QUAD_LAGRANGE = HermiteBasis(2, np.array([
    [1.0, -3.0, 2.0],
    [0.0, 4.0, -4.0],
    [0.0, -1.0, 2.0],
]))


def hermite_basis(degree: int) -> HermiteBasis:
    if degree == 3:
        return CUBIC
    if degree == 5:
        return QUINTIC
    raise ValueError(f"no Hermite basis of degree {degree} (only 3 and 5)")


def basis_eval(basis: HermiteBasis, idx: int, that: float, deriv: int = 0) -> float:
    if not 0 <= idx <= basis.degree:
        raise ValueError(f"basis index {idx} out of range 0..{basis.degree}")
    if not 0 <= deriv <= 2:
        raise ValueError("derivative order must be 0, 1 or 2")
    c = basis.coeffs[idx]
    for _ in range(deriv):
        c = np.polynomial.polynomial.polyder(c)
    return float(np.polynomial.polynomial.polyval(that, c))


@dataclass(frozen=True)
class SlabCoeffs:
    """Hermite coefficient vectors of (u, v) on one time slab.

    ``u`` and ``v`` have shape (degree+1, n); rows follow the scaling
    convention of the module docstring.
    """

    index: int
    t_start: float
    tau: float
    u: np.ndarray
    v: np.ndarray
    basis: HermiteBasis

    @property
    def t_end(self) -> float:
        return self.t_start + self.tau

    def field(self, name: str) -> np.ndarray:
        return {"u": self.u, "v": self.v}[name]


def slab_eval(coeffs: SlabCoeffs, t: float, deriv: int = 0,
              field: str = "u") -> np.ndarray:
    """Value (or time derivative) of the slab polynomial at time t."""
    tau = coeffs.tau
    that = (t - coeffs.t_start) / tau
    if not -1e-12 <= that <= 1.0 + 1e-12:
        raise ValueError(f"t={t} outside slab [{coeffs.t_start}, {coeffs.t_end}]")
    row = coeffs.basis.eval_matrix(np.array([that]), deriv)[0]
    return (row @ coeffs.field(field)) / tau ** deriv


def hermite_coeffs_of(g: Callable, t_start: float, tau: float, l: int) -> list:
    """Hermite interpolation data of ``g`` on [t_start, t_start + tau].

    ``g(t, s)`` returns the s-th time derivative (scalar or vector).  The
    result lists tau^s * g^(s) at the left endpoint for s = 0..l, then the
    same at the right endpoint; it reproduces polynomials of degree 2l+1.
    """
    t1 = t_start + tau
    out = [np.asarray(g(t_start, s), dtype=float) * tau ** s for s in range(l + 1)]
    out += [np.asarray(g(t1, s), dtype=float) * tau ** s for s in range(l + 1)]
    return out
