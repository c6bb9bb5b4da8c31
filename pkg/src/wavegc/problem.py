"""Wave problem definitions: coefficients, forcing, boundary/initial data.

All forcing and boundary callbacks carry closed-form time derivatives, since
the schemes interpolate right-hand sides from endpoint derivative data and
finite differencing would pollute the high-order convergence.  Point
arguments are (N, 2) arrays; exact-solution callbacks broadcast over an
optional 1-d array of times and then return (N, nt).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Callable

import numpy as np

from .mesh import Rect

TWO_PI = 2.0 * np.pi
FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class WaveProblem:
    """Data bundle for d_t^2 u - c^2 lap u = f with Dirichlet/Neumann parts.

    ``f(points, t, s)`` and ``g(points, t, s)`` return the s-th time
    derivative (s up to 2 for f, up to 3 for g).  ``dtv0``/``dt2v0`` supply
    d_t v(0) = c^2 lap u0 + f(0) and d_t^2 v(0) = c^2 lap v0 + d_t f(0)
    analytically, which the collocation start-up needs.
    """

    name: str
    domain: Rect
    T: float
    csq: Callable
    f: Callable
    g: Callable
    u0: Callable
    v0: Callable
    dtv0: Callable
    dt2v0: Callable
    dirichlet_predicate: Callable
    exact: Callable | None = None        # exact(points, t, s): s=0 -> u, s<=3
    exact_grad: Callable | None = None   # (points, t) -> (du/dx1, du/dx2)
    exact_lap: Callable | None = None
    control_region: Rect | None = None

    def has_exact(self) -> bool:
        return self.exact is not None


def _split(points, t):
    """Coordinates and time shaped for broadcasting (t scalar or 1-d)."""
    points = np.atleast_2d(points)
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        return points[:, 0], points[:, 1], t
    return points[:, 0][:, None], points[:, 1][:, None], t[None, :]


def _zero_data(points, t=0.0, s=0):
    pts = np.atleast_2d(points)
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        return np.zeros(pts.shape[0])
    return np.zeros((pts.shape[0], t.size))


def _check_g_derivatives(problem: WaveProblem, sample_points: np.ndarray,
                         times=(0.13, 0.57), dt: float = 1e-5,
                         rel_tol: float = 1e-6) -> None:
    """Spot-check that g(., ., s) really are time derivatives of g(., ., 0)."""
    for t in times:
        for s in (1, 2, 3):
            lo = problem.g(sample_points, t - dt, s - 1)
            hi = problem.g(sample_points, t + dt, s - 1)
            fd = (hi - lo) / (2.0 * dt)
            an = problem.g(sample_points, t, s)
            scale = max(np.max(np.abs(an)), np.max(np.abs(fd)), 1.0)
            if np.max(np.abs(fd - an)) > rel_tol * scale:
                raise ValueError(
                    f"boundary data derivative order {s} inconsistent at t={t}")


def mms_u1() -> WaveProblem:
    """Manufactured solution sin(4 pi t) x1(x1-1) x2(x2-1) on the unit square.

    Homogeneous Dirichlet data, c = 1; the spatial factor lies in Q2, so on
    a Q3 space the discretization error is purely temporal.
    """
    domain = Rect(0.0, 1.0, 0.0, 1.0)

    def spatial(x1, x2):
        return x1 * (x1 - 1.0) * x2 * (x2 - 1.0)

    def spatial_lap(x1, x2):
        return 2.0 * (x1 * (x1 - 1.0) + x2 * (x2 - 1.0))

    def tfac(t, s):
        return FOUR_PI ** s * np.sin(FOUR_PI * t + 0.5 * np.pi * s)

    def exact(points, t, s=0):
        x1, x2, tt = _split(points, t)
        return tfac(tt, s) * spatial(x1, x2)

    def exact_grad(points, t):
        x1, x2, tt = _split(points, t)
        st = np.sin(FOUR_PI * tt)
        return (st * (2.0 * x1 - 1.0) * x2 * (x2 - 1.0),
                st * x1 * (x1 - 1.0) * (2.0 * x2 - 1.0))

    def exact_lap(points, t):
        x1, x2, tt = _split(points, t)
        return np.sin(FOUR_PI * tt) * spatial_lap(x1, x2)

    def f(points, t, s=0):
        x1, x2, tt = _split(points, t)
        return -tfac(tt, s) * (FOUR_PI ** 2 * spatial(x1, x2) + spatial_lap(x1, x2))

    return WaveProblem(
        name="mms_u1", domain=domain, T=1.0,
        csq=lambda pts: np.ones(np.atleast_2d(pts).shape[0]),
        f=f, g=_zero_data,
        u0=lambda pts: exact(pts, 0.0, 0),
        v0=lambda pts: exact(pts, 0.0, 1),
        dtv0=lambda pts: exact(pts, 0.0, 2),
        dt2v0=lambda pts: exact(pts, 0.0, 3),
        dirichlet_predicate=lambda p: True,
        exact=exact, exact_grad=exact_grad, exact_lap=exact_lap,
    )


def mms_u2() -> WaveProblem:
    """Manufactured solution sin(2 pi t + x1) sin(2 pi t x2), inhomogeneous
    Dirichlet data on the whole boundary of the unit square."""
    domain = Rect(0.0, 1.0, 0.0, 1.0)

    def _a(x1, t, s):
        return TWO_PI ** s * np.sin(TWO_PI * t + x1 + 0.5 * np.pi * s)

    def _b(x2, t, s):
        return (TWO_PI * x2) ** s * np.sin(TWO_PI * t * x2 + 0.5 * np.pi * s)

    def u_dt(points, t, s=0):
        x1, x2, tt = _split(points, t)
        out = 0.0
        for j in range(s + 1):
            out = out + comb(s, j) * _a(x1, tt, j) * _b(x2, tt, s - j)
        return out

    def exact_grad(points, t):
        x1, x2, tt = _split(points, t)
        gx = np.cos(TWO_PI * tt + x1) * np.sin(TWO_PI * tt * x2)
        gy = np.sin(TWO_PI * tt + x1) * TWO_PI * tt * np.cos(TWO_PI * tt * x2)
        return gx, gy

    def exact_lap(points, t):
        x1, x2, tt = _split(points, t)
        return -(1.0 + TWO_PI ** 2 * tt ** 2) * _a(x1, tt, 0) * _b(x2, tt, 0)

    # f = u_tt - lap u = u_tt + (1 + 4 pi^2 t^2) u, hence
    # f'  = u_ttt  + (1 + 4 pi^2 t^2) u_t  +  8 pi^2 t u
    # f'' = u_tttt + (1 + 4 pi^2 t^2) u_tt + 16 pi^2 t u_t + 8 pi^2 u
    def f(points, t, s=0):
        _, _, tt = _split(points, t)
        w = 1.0 + TWO_PI ** 2 * tt ** 2
        if s == 0:
            return u_dt(points, t, 2) + w * u_dt(points, t, 0)
        if s == 1:
            return (u_dt(points, t, 3) + w * u_dt(points, t, 1)
                    + 2.0 * TWO_PI ** 2 * tt * u_dt(points, t, 0))
        if s == 2:
            return (u_dt(points, t, 4) + w * u_dt(points, t, 2)
                    + 4.0 * TWO_PI ** 2 * tt * u_dt(points, t, 1)
                    + 2.0 * TWO_PI ** 2 * u_dt(points, t, 0))
        raise ValueError(f"forcing derivative order {s} not available")

    prob = WaveProblem(
        name="mms_u2", domain=domain, T=1.0,
        csq=lambda pts: np.ones(np.atleast_2d(pts).shape[0]),
        f=f, g=u_dt,
        u0=lambda pts: u_dt(pts, 0.0, 0),
        v0=lambda pts: u_dt(pts, 0.0, 1),
        dtv0=lambda pts: u_dt(pts, 0.0, 2),
        dt2v0=lambda pts: u_dt(pts, 0.0, 3),
        dirichlet_predicate=lambda p: True,
        exact=u_dt, exact_grad=exact_grad, exact_lap=exact_lap,
    )
    edge = np.column_stack([np.zeros(5), np.linspace(0.0, 1.0, 5)])
    _check_g_derivatives(prob, edge)
    return prob


def shm_problem(h_c: float = 0.05) -> WaveProblem:
    """Regularized impulse in a plate with a jump in the wave speed.

    The material coefficient is c = 1 below the line x2 = 0.2 and c = 9
    above it; the initial displacement is a compactly supported bump of
    radius 0.01 at the origin and the sensor region is a square of
    half-width ``h_c`` centred at (0.75, 0).
    """
    if not 0.0 < h_c < 0.25:
        raise ValueError(f"h_c must lie in (0, 0.25), got {h_c}")
    domain = Rect(-1.0, 1.0, -1.0, 1.0)
    scale = 100.0

    def csq(pts):
        pts = np.atleast_2d(pts)
        return np.where(pts[:, 1] < 0.2, 1.0, 81.0)

    def u0(pts):
        pts = np.atleast_2d(pts)
        rho = scale ** 2 * (pts[:, 0] ** 2 + pts[:, 1] ** 2)
        return np.where(rho < 1.0, np.exp(-rho) * (1.0 - rho), 0.0)

    def lap_u0(pts):
        pts = np.atleast_2d(pts)
        rho = scale ** 2 * (pts[:, 0] ** 2 + pts[:, 1] ** 2)
        inner = 4.0 * np.exp(-rho) * (-rho ** 2 + 4.0 * rho - 2.0)
        return scale ** 2 * np.where(rho < 1.0, inner, 0.0)

    return WaveProblem(
        name="shm", domain=domain, T=1.0,
        csq=csq,
        f=_zero_data,
        g=_zero_data,
        u0=u0, v0=lambda pts: _zero_data(pts),
        dtv0=lambda pts: csq(pts) * lap_u0(pts),
        dt2v0=lambda pts: _zero_data(pts),
        dirichlet_predicate=lambda p: True,
        control_region=Rect(0.75 - h_c, 0.75 + h_c, -h_c, h_c),
    )


def problem_by_name(name: str, h_c: float = 0.05) -> WaveProblem:
    factories = {"mms_u1": mms_u1, "mms_u2": mms_u2,
                 "shm": lambda: shm_problem(h_c)}
    if name not in factories:
        raise ValueError(f"unknown problem {name!r}; pick one of {sorted(factories)}")
    return factories[name]()
