"""Full runs: time marching, error norms, EOC tables, sensor signal, output.

The error norms follow the measurement protocol of the convergence studies:
sup norms in time are taken over a dense per-slab sampling grid
(t = t_{n-1} + d * k_n * tau_n, default density k_n = 0.001) and
L2-in-time integrals use a per-slab Gauss rule with 2(k+1) points.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fespace import (FeSpace, assemble_mass, assemble_stiffness, build_space,
                      gauss_rule_01, lagrange_eval_1d, lagrange_nodes_1d,
                      quadrature_eval)
from .mesh import Rect, build_rect_mesh
from .problem import WaveProblem, problem_by_name
from .slabdata import ProblemData
from .stepper_cgp2 import Cgp2Stepper, advance_cgp, init_cgp_state
from .stepper_gcc1 import Gcc1Stepper, advance, init_state
from .stepper_gcc2 import Gcc2Stepper, advance2, init_state2
from .timebasis import SlabCoeffs

SCHEMES = ("gcc1", "gcc2", "cgp2")
SOLVERS = ("condensed", "block-direct", "block-gmres")


@dataclass(frozen=True)
class RunConfig:
    problem: str = "mms_u1"
    scheme: str = "gcc1"
    solver: str = "condensed"
    p: int = 3
    nx: int = 4
    ny: int = 4
    tau0: float = 0.1
    refinements: int = 0
    refine: str = "time"             # "time" | "spacetime"
    rel_tol: float = 1e-10
    knorm_density: float = 0.001
    T: float | None = None
    h_c: float = 0.05
    out_dir: str = "out"
    placement: str = "equispaced"
    threads: int | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.scheme == "cgp2" and self.solver == "condensed":
            raise ValueError("the cgp2 baseline has no condensed solver; "
                             "use block-direct or block-gmres")
        for name in ("p", "nx", "ny"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.tau0 <= 0.0 or self.knorm_density <= 0.0:
            raise ValueError("tau0 and knorm_density must be positive")
        if self.refine not in ("time", "spacetime"):
            raise ValueError("refine must be 'time' or 'spacetime'")
        if self.refinements < 0:
            raise ValueError("refinements must be >= 0")
        if self.problem == "shm" and self.ny % 5 != 0:
            raise ValueError("SHM runs need ny divisible by 5 so cell edges "
                             "align with the coefficient jump at x2 = 0.2")


def config_threads(cfg: RunConfig) -> int:
    cap = os.environ.get("WAVEGC_THREADS")
    n = cfg.threads or os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


@dataclass(frozen=True)
class Discretization:
    problem: WaveProblem
    space: FeSpace
    M: sp.csr_matrix
    A: sp.csr_matrix
    M_free: sp.csr_matrix
    A_free: sp.csr_matrix
    data: ProblemData


def discretize(problem: WaveProblem, nx: int, ny: int, p: int,
               placement: str = "equispaced") -> Discretization:
    mesh = build_rect_mesh(problem.domain, nx, ny, problem.dirichlet_predicate)
    space = build_space(mesh, p, placement)
    M = assemble_mass(space)
    A = assemble_stiffness(space, problem.csq)
    return Discretization(problem, space, M, A,
                          space.restrict_free(M), space.restrict_free(A),
                          ProblemData(problem, space, M, A))


def make_stepper(disc: Discretization, scheme: str, solver: str,
                 rel_tol: float = 1e-10):
    if scheme == "gcc1":
        return Gcc1Stepper(disc.M_free, disc.A_free, data_source=disc.data,
                           solver=solver, rel_tol=rel_tol)
    if scheme == "gcc2":
        return Gcc2Stepper(disc.M_free, disc.A_free, data_source=disc.data,
                           solver=solver, rel_tol=rel_tol)
    if scheme == "cgp2":
        return Cgp2Stepper(disc.M_free, disc.A_free, data_source=disc.data,
                           solver=solver, rel_tol=rel_tol)
    raise ValueError(f"unknown scheme {scheme!r}")


@dataclass
class SimulationResult:
    slabs: list
    reports: list
    disc: Discretization
    scheme: str
    tau: float

    @property
    def t_end(self) -> float:
        return self.slabs[-1].t_end if self.slabs else 0.0

    def max_iterations(self) -> int:
        return max((r.iterations for r in self.reports), default=0)


def run_simulation(disc: Discretization, scheme: str, tau: float,
                   T: float | None = None, solver: str = "condensed",
                   rel_tol: float = 1e-10) -> SimulationResult:
    """March ceil(T / tau) slabs; a shorter final slab lands exactly on T."""
    problem = disc.problem
    T = problem.T if T is None else T
    n_slabs = max(1, math.ceil(T / tau - 1e-12))
    taus = [tau] * n_slabs
    taus[-1] = T - (n_slabs - 1) * tau
    stepper = make_stepper(disc, scheme, solver, rel_tol)

    slabs, reports = [], []
    if scheme == "cgp2":
        state = init_cgp_state(problem, disc.space, disc.M)
        for n in range(n_slabs):
            coeffs, rep = stepper.step(state, taus[n])
            state = advance_cgp(coeffs)
            slabs.append(coeffs)
            reports.append(rep)
        return SimulationResult(slabs, reports, disc, scheme, tau)

    if scheme == "gcc1":
        state = init_state(problem, disc.space, taus[0], disc.M, disc.A)
        adv = advance
    else:
        state = init_state2(problem, disc.space, taus[0], disc.M, disc.A)
        adv = advance2
    for n in range(n_slabs):
        try:
            coeffs, rep = stepper.step(state)
        except Exception as exc:
            raise RuntimeError(f"solver failed in slab {n} at t={state.t}") from exc
        state = adv(coeffs, taus[min(n + 1, n_slabs - 1)])
        slabs.append(coeffs)
        reports.append(rep)
    return SimulationResult(slabs, reports, disc, scheme, tau)


@dataclass(frozen=True)
class ErrorRow:
    tau: float
    h: float
    eu_linf: float
    ev_linf: float
    energy_linf: float
    eu_l2: float
    ev_l2: float
    energy_l2: float

    def norms(self) -> tuple:
        return (self.eu_linf, self.ev_linf, self.energy_linf,
                self.eu_l2, self.ev_l2, self.energy_l2)


NORM_LABELS = ("eu_Linf_L2", "ev_Linf_L2", "energy_Linf",
               "eu_L2_L2", "ev_L2_L2", "energy_L2")


@dataclass(frozen=True)
class ErrorReport:
    rows: tuple
    eocs: tuple  # per row: tuple of 6 floats or None for the first row

    def column(self, idx: int) -> list:
        return [row.norms()[idx] for row in self.rows]

    def eoc_column(self, idx: int) -> list:
        return [e[idx] if e is not None else None for e in self.eocs]


def eoc_table(rows) -> ErrorReport:
    rows = tuple(rows)
    eocs = [None]
    for prev, cur in zip(rows, rows[1:]):
        eocs.append(tuple(
            math.log(p / c, 2.0) if p > 0 and c > 0 else float("nan")
            for p, c in zip(prev.norms(), cur.norms())))
    return ErrorReport(rows, tuple(eocs))


class ErrorNormCalculator:
    """Space-time error norms of a slab sequence against the exact solution."""

    def __init__(self, disc: Discretization, knorm_density: float = 0.001):
        if not disc.problem.has_exact():
            raise ValueError("error norms need a problem with an exact solution")
        self.disc = disc
        self.kn = knorm_density
        space = disc.space
        qe = quadrature_eval(space)
        self.points = qe.points
        self.weights = qe.weights
        free, diri = space.free_dofs, space.dirichlet_dofs
        self.val_f = qe.val_op[:, free].tocsr()
        self.gx_f = qe.gx_op[:, free].tocsr()
        self.gy_f = qe.gy_op[:, free].tocsr()
        self.val_d = qe.val_op[:, diri].tocsr()
        self.gx_d = qe.gx_op[:, diri].tocsr()
        self.gy_d = qe.gy_op[:, diri].tocsr()
        self.dir_pts = space.dof_coords[diri]
        self.has_dir = len(diri) > 0
        # keep the per-chunk workspace around ~100 MB
        self.chunk = max(8, int(1.5e6 / max(len(self.weights), 1)))

    def _norm_sq_at(self, slab: SlabCoeffs, tab, that: np.ndarray):
        """Squared L2(Omega) norms of (e_u, e_v, energy) at sample times."""
        theta = slab.basis.eval_matrix(that, 0)
        tt = slab.t_start + that * slab.tau
        vu = tab["vu"] @ theta.T
        vv = tab["vv"] @ theta.T
        gx = tab["gx"] @ theta.T
        gy = tab["gy"] @ theta.T
        if self.has_dir:
            g0 = self.disc.problem.g(self.dir_pts, tt, 0)
            g1 = self.disc.problem.g(self.dir_pts, tt, 1)
            vu += self.val_d @ g0
            vv += self.val_d @ g1
            gx += self.gx_d @ g0
            gy += self.gy_d @ g0
        prob = self.disc.problem
        eu = vu - prob.exact(self.points, tt, 0)
        ev = vv - prob.exact(self.points, tt, 1)
        exg, eyg = prob.exact_grad(self.points, tt)
        egx = gx - exg
        egy = gy - eyg
        nu = self.weights @ (eu * eu)
        nv = self.weights @ (ev * ev)
        ne = self.weights @ (egx * egx + egy * egy) + nv
        return nu, nv, ne

    def compute(self, slabs) -> ErrorRow:
        nd = max(1, round(1.0 / self.kn))
        grid = np.arange(nd) * self.kn
        k = slabs[0].basis.degree
        glq, glw = gauss_rule_01(2 * (k + 1))
        sup = np.zeros(3)
        acc = np.zeros(3)
        for slab in slabs:
            tab = {
                "vu": self.val_f @ slab.u.T,
                "vv": self.val_f @ slab.v.T,
                "gx": self.gx_f @ slab.u.T,
                "gy": self.gy_f @ slab.u.T,
            }
            for lo in range(0, nd, self.chunk):
                part = grid[lo:lo + self.chunk]
                vals = self._norm_sq_at(slab, tab, part)
                for i in range(3):
                    sup[i] = max(sup[i], float(np.max(vals[i])))
            vals = self._norm_sq_at(slab, tab, glq)
            for i in range(3):
                acc[i] += slab.tau * float(glw @ vals[i])
        space = self.disc.space
        return ErrorRow(slabs[0].tau, space.mesh.h,
                        *np.sqrt(sup), *np.sqrt(acc))


def error_norms(result: SimulationResult, knorm_density: float = 0.001) -> ErrorRow:
    return ErrorNormCalculator(result.disc, knorm_density).compute(result.slabs)


def convergence_study(cfg: RunConfig) -> ErrorReport:
    """Refinement study: tau is halved per level; 'spacetime' also halves h."""
    base_problem = problem_by_name(cfg.problem, cfg.h_c)

    def run_level(i: int) -> ErrorRow:
        factor = 2 ** i
        nx, ny = (cfg.nx * factor, cfg.ny * factor) \
            if cfg.refine == "spacetime" else (cfg.nx, cfg.ny)
        disc = discretize(base_problem, nx, ny, cfg.p, cfg.placement)
        result = run_simulation(disc, cfg.scheme, cfg.tau0 / factor, cfg.T,
                                cfg.solver, cfg.rel_tol)
        return ErrorNormCalculator(disc, cfg.knorm_density).compute(result.slabs)

    levels = range(cfg.refinements + 1)
    workers = min(config_threads(cfg), len(levels))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_level, levels))
    else:
        rows = [run_level(i) for i in levels]
    return eoc_table(rows)


@dataclass(frozen=True)
class ControlSeries:
    times: np.ndarray
    values: np.ndarray
    empty_region: bool = False


def control_weights(space: FeSpace, region: Rect) -> np.ndarray:
    """Weight vector w with w . coeffs = integral of the field over the
    region; cells are clipped against the region, so its edges need not
    align with the mesh."""
    mesh = space.mesh
    hx, hy = mesh.cell_size
    ts = lagrange_nodes_1d(space.p, space.placement)
    q, w1 = gauss_rule_01(space.p + 2)
    w = np.zeros(space.n_dofs)
    for c in range(mesh.n_cells):
        x0, y0 = mesh.vertices[mesh.cells[c, 0]]
        xa, xb = max(x0, region.ax), min(x0 + hx, region.bx)
        ya, yb = max(y0, region.ay), min(y0 + hy, region.by)
        if xb - xa <= 0.0 or yb - ya <= 0.0:
            continue
        qx = (xa - x0) / hx + q * (xb - xa) / hx
        qy = (ya - y0) / hy + q * (yb - ya) / hy
        lx = lagrange_eval_1d(ts, qx)       # (p+1, nq)
        ly = lagrange_eval_1d(ts, qy)
        # integral of each tensor basis member over the clipped rectangle
        ix = lx @ (w1 * (xb - xa))
        iy = ly @ (w1 * (yb - ya))
        w[space.cell_dofs[c]] += np.outer(iy, ix).ravel()
    return w


def control_quantity(result: SimulationResult, region: Rect,
                     times: np.ndarray) -> ControlSeries:
    space = result.disc.space
    w = control_weights(space, region)
    if not np.any(w):
        return ControlSeries(np.asarray(times), np.zeros(len(times)),
                             empty_region=True)
    w_free = w[space.free_dofs]
    w_dir = w[space.dirichlet_dofs]
    dir_pts = space.dof_coords[space.dirichlet_dofs]
    problem = result.disc.problem

    times = np.asarray(times, dtype=float)
    values = np.empty_like(times)
    starts = np.array([s.t_start for s in result.slabs])
    idx = np.clip(np.searchsorted(starts, times, side="right") - 1,
                  0, len(result.slabs) - 1)
    for j in np.unique(idx):
        slab = result.slabs[j]
        sel = idx == j
        that = np.clip((times[sel] - slab.t_start) / slab.tau, 0.0, 1.0)
        theta = slab.basis.eval_matrix(that, 0)
        values[sel] = theta @ (slab.u @ w_free)
        if len(w_dir):
            gvals = problem.g(dir_pts, times[sel], 0)
            values[sel] += w_dir @ np.atleast_2d(gvals)
    return ControlSeries(times, values)


def shm_deviation(disc: Discretization, scheme: str, tau_base: float,
                  multiplier: float, solver: str = "block-direct",
                  n_samples: int = 2000, rel_tol: float = 1e-8,
                  fine: SimulationResult | None = None) -> dict:
    """Relative L2-in-time deviation of the sensor signal between a
    coarsened run and the scheme's own fine reference."""
    region = disc.problem.control_region
    T = disc.problem.T
    times = np.linspace(0.0, T, n_samples + 1)
    if fine is None:
        fine = run_simulation(disc, scheme, tau_base, solver=solver,
                              rel_tol=rel_tol)
    coarse = run_simulation(disc, scheme, tau_base * multiplier,
                            solver=solver, rel_tol=rel_tol)
    uc_fine = control_quantity(fine, region, times).values
    uc_coarse = control_quantity(coarse, region, times).values
    diff = uc_coarse - uc_fine
    denom = math.sqrt(np.trapezoid(uc_fine ** 2, times))
    dev = math.sqrt(np.trapezoid(diff ** 2, times)) / max(denom, 1e-300)
    return {"scheme": scheme, "multiplier": multiplier, "deviation": dev,
            "fine": fine, "coarse": coarse,
            "uc_fine": uc_fine, "uc_coarse": uc_coarse, "times": times}


# ---------------------------------------------------------------------------
# file output

def _fmt(x: float) -> str:
    return f"{x:.6e}"


def write_report_csv(report: ErrorReport, path: str) -> None:
    header = ["tau", "h"]
    for label in NORM_LABELS:
        header += [label, "eoc_" + label]
    lines = [",".join(header)]
    for row, eoc in zip(report.rows, report.eocs):
        cells = [_fmt(row.tau), _fmt(row.h)]
        for i, norm in enumerate(row.norms()):
            cells.append(_fmt(norm))
            cells.append("" if eoc is None else f"{eoc[i]:.2f}")
        lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_series_csv(series: ControlSeries, path: str) -> None:
    lines = ["t,u_c"]
    for t, v in zip(series.times, series.values):
        lines.append(f"{_fmt(t)},{_fmt(v)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_vtk_snapshot(space: FeSpace, values: np.ndarray, path: str,
                       name: str = "u") -> None:
    """Legacy ASCII VTK structured grid of nodal values (z = 0 plane)."""
    values = np.asarray(values)
    if values.shape != (space.n_dofs,):
        raise ValueError("snapshot needs one value per DOF")
    gx = space.p * space.mesh.nx + 1
    gy = space.p * space.mesh.ny + 1
    out = [
        "# vtk DataFile Version 3.0",
        "wavegc field snapshot",
        "ASCII",
        "DATASET STRUCTURED_GRID",
        f"DIMENSIONS {gx} {gy} 1",
        f"POINTS {gx * gy} double",
    ]
    for x, y in space.dof_coords:
        out.append(f"{x:.9g} {y:.9g} 0")
    out += [
        f"POINT_DATA {gx * gy}",
        f"SCALARS {name} double 1",
        "LOOKUP_TABLE default",
    ]
    out.extend(f"{v:.9g}" for v in values)
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def full_field(result: SimulationResult, t: float) -> np.ndarray:
    """Nodal values of u at time t, boundary lifting included."""
    space = result.disc.space
    starts = np.array([s.t_start for s in result.slabs])
    j = int(np.clip(np.searchsorted(starts, t, side="right") - 1,
                    0, len(result.slabs) - 1))
    slab = result.slabs[j]
    that = np.clip((t - slab.t_start) / slab.tau, 0.0, 1.0)
    theta = slab.basis.eval_matrix(np.array([that]), 0)[0]
    out = space.expand_free(theta @ slab.u)
    diri = space.dirichlet_dofs
    if len(diri):
        out[diri] = result.disc.problem.g(space.dof_coords[diri], t, 0)
    return out
