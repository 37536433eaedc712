"""Fluid cell problems in the pore space and the permeability matrices.

Velocities live on MAC faces whose two neighbouring cells are both fluid;
faces touching the solid carry zero velocity.  Tangential no-slip is
imposed by reflecting ghost values, which puts the wall on the cell face.
Pressures live on fluid cells and are fixed up to a constant on every
connected fluid component.

* steady Stokes with unit body force ``e_i``  -> ``B2`` (columns are the
  zero-extended cell averages of the velocities),
* unsteady Stokes started from ``e_i / (tau0 rho_f)`` -> kernel ``B1(t)``,
* Neumann potential problem in the pores -> ``B3`` and ``m I - B3``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse import csgraph
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .grid import PeriodicGrid
from .microcell import VoxelCell
from .solvers import SaddleSolver, SolverError, SPDSolver, amg_preconditioner


class FluidProblemError(ValueError):
    """Fluid cell problem is ill-posed for the given geometry or parameters."""


class _PoreSpace:
    # discrete operators restricted to the pore space

    def __init__(self, cell: VoxelCell):
        self.cell = cell
        g = self.grid = PeriodicGrid(cell.dims)
        chi = cell.chi.ravel().astype(bool)
        self.chi = chi
        self.cells = np.flatnonzero(chi)
        n = g.n
        vol = g.volume
        # a face of axis a at idx is open when cells idx and idx+e_a are fluid
        open_faces = [chi & chi[g.shift_index(a, 1)] for a in range(3)]
        self.open_mask = np.concatenate(open_faces)
        self.faces = np.flatnonzero(self.open_mask)
        self.face_axis = self.faces // n
        nf = self.faces.size
        pos = np.full(3 * n, -1)
        pos[self.faces] = np.arange(nf)
        self.face_pos = pos

        rows, cols, vals = [], [], []
        diag = np.zeros(nf)
        for a in range(3):
            base = a * n
            idx = np.flatnonzero(open_faces[a])
            i = pos[base + idx]
            for b in range(3):
                w = vol / g.h[b] ** 2
                wall = w if a == b else 2.0 * w
                j = pos[base + g.shift_index(b, 1)[idx]]
                inner = j >= 0
                # interior links, counted once from the lower face
                ii, jj = i[inner], j[inner]
                rows += [ii, jj, ii, jj]
                cols += [ii, jj, jj, ii]
                vals += [np.full(ii.size, w)] * 2 + [np.full(ii.size, -w)] * 2
                np.add.at(diag, i[~inner], wall)
                jm = pos[base + g.shift_index(b, -1)[idx]]
                np.add.at(diag, i[jm < 0], wall)
        rows = np.concatenate(rows) if rows else np.zeros(0, dtype=int)
        cols = np.concatenate(cols) if cols else np.zeros(0, dtype=int)
        vals = np.concatenate(vals) if vals else np.zeros(0)
        L = sp.csr_matrix((vals, (rows, cols)), shape=(nf, nf)) + sp.diags(diag)
        self.laplace = L.tocsr()
        self.mass = vol * sp.identity(nf, format="csr")
        # weak divergence on fluid cells: (B u)_c = -|cell| div u
        D = g.div[self.cells][:, self.faces]
        self.B = (-vol * D).tocsr()
        # fluid components through open faces; pressure is free on each
        pc = np.full(n, -1)
        pc[self.cells] = np.arange(self.cells.size)
        adj_r, adj_c = [], []
        for a in range(3):
            idx = np.flatnonzero(open_faces[a])
            adj_r.append(pc[idx])
            adj_c.append(pc[g.shift_index(a, 1)[idx]])
        nc = self.cells.size
        if nc:
            adj = sp.csr_matrix((np.ones(sum(len(r) for r in adj_r)),
                                 (np.concatenate(adj_r), np.concatenate(adj_c))), shape=(nc, nc))
            ncomp, labels = csgraph.connected_components(adj, directed=False)
        else:
            ncomp, labels = 0, np.zeros(0, dtype=int)
        self.n_components = ncomp
        self.component = labels
        self.pressure_null = (np.stack([(labels == c).astype(float) for c in range(ncomp)], axis=1)
                              if ncomp else None)

    @property
    def porosity(self) -> float:
        return self.cell.porosity

    def body_force(self, i: int) -> np.ndarray:
        return self.grid.volume * (self.face_axis == i).astype(float)

    def average(self, u_open: np.ndarray) -> np.ndarray:
        """Zero-extended cell average of a face velocity, per component."""
        vol = self.grid.volume
        return np.array([vol * u_open[self.face_axis == a].sum() for a in range(3)])

    def full_velocity(self, u_open: np.ndarray) -> np.ndarray:
        out = np.zeros(3 * self.grid.n)
        out[self.faces] = u_open
        return out

    def divergence(self, u_open: np.ndarray) -> np.ndarray:
        return self.grid.div @ self.full_velocity(u_open)

    def pressure_poisson(self) -> sp.csr_matrix:
        # B M^-1 B^T: cell-centred Neumann Laplacian on fluid cells
        return (self.B @ sp.diags(1.0 / self.mass.diagonal()) @ self.B.T).tocsr()


@dataclass
class StokesCellSolution:
    cell: VoxelCell
    mu1: float
    velocity: dict = field(default_factory=dict)
    pressure: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    tau0: float | None = None
    rho_f: float | None = None
    times: np.ndarray | None = None
    samples: list = field(default_factory=list)
    raw_initial: np.ndarray | None = None
    projected_initial: np.ndarray | None = None
    divergence_residual: float = 0.0


@dataclass
class PermeabilitySet:
    m: float
    B2: np.ndarray | None = None
    B1_kernel: list | None = None
    B1_raw_initial: np.ndarray | None = None
    B3: np.ndarray | None = None
    mI_minus_B3: np.ndarray | None = None


def _check_fluid_geometry(cell: VoxelCell, mu_required=True):
    if cell.porosity >= 1.0:
        raise FluidProblemError("ill-posed: no solid anchor (the cell is entirely fluid)")


def _stokes_schur(space: _PoreSpace, mu: float, mass_coef: float):
    """Approximate inverse Schur complement for ``mass_coef M + mu L``."""
    vol = space.grid.volume
    k = space.cells.size
    visc = mu / vol
    if mass_coef <= 0:
        return spla.LinearOperator((k, k), matvec=lambda r: visc * r)
    Lp = space.pressure_poisson()
    shift = 1e-10 * max(abs(Lp.diagonal()).max(), 1.0)
    Mp = amg_preconditioner(Lp + shift * sp.identity(k), space.pressure_null)
    return spla.LinearOperator((k, k), matvec=lambda r: visc * r + mass_coef * (Mp @ r))


def _stokes_solver(space, mu, mass_coef, tol, method):
    A = mu * space.laplace
    if mass_coef > 0:
        A = A + mass_coef * space.mass
    n_total = A.shape[0] + space.B.shape[0]
    iterative = method == "minres" or (method == "auto" and n_total > SaddleSolver.direct_limit)
    schur = _stokes_schur(space, mu, mass_coef) if iterative else None
    return SaddleSolver(A, space.B, tol=tol, pressure_nullspace=space.pressure_null,
                        label="stokes cell", method=method, schur_precond=schur)


def solve_steady_stokes(cell: VoxelCell, mu1: float, tol: float = 1e-10,
                        method: str = "auto") -> StokesCellSolution:
    """Three Stokes solves with body force ``e_i`` in the pores."""
    if not mu1 > 0:
        raise FluidProblemError("steady Stokes cell problem needs mu1 > 0")
    _check_fluid_geometry(cell)
    sol = StokesCellSolution(cell=cell, mu1=float(mu1))
    space = _PoreSpace(cell)
    sol._space = space
    if space.faces.size == 0:
        if cell.porosity == 0:
            warnings.warn("cell has no fluid: permeability is zero", stacklevel=2)
        for i in range(3):
            sol.velocity[i] = np.zeros(0)
            sol.pressure[i] = np.zeros(space.cells.size)
            sol.residuals[i] = 0.0
        return sol
    solver = _stokes_solver(space, mu1, 0.0, tol, method)
    worst_div = 0.0
    for i in range(3):
        f = space.body_force(i)
        u, p = solver.solve(f, np.zeros(space.cells.size))
        sol.velocity[i] = u
        sol.pressure[i] = p
        r = np.linalg.norm(solver.A @ u + space.B.T @ p - f) / max(np.linalg.norm(f), 1e-300)
        sol.residuals[i] = float(r)
        worst_div = max(worst_div, float(np.abs(space.divergence(u)).max()))
    sol.divergence_residual = worst_div
    return sol


def permeability_B2(sol: StokesCellSolution) -> np.ndarray:
    space = sol._space
    B2 = np.zeros((3, 3))
    if space.faces.size == 0:
        return B2
    for i in range(3):
        B2[:, i] = space.average(sol.velocity[i])
    return B2


def viscous_length(cell: VoxelCell) -> float:
    """Smallest over axes of the mean fluid chord length (cell units)."""
    chi = cell.chi.astype(bool)
    best = math.inf
    for a in range(3):
        n = chi.shape[a]
        lines = np.moveaxis(chi, a, -1).reshape(-1, n)
        lengths = []
        for line in lines:
            if not line.any():
                continue
            if line.all():
                lengths.append(n)
                continue
            # rotate so the line starts in solid, then split fluid runs
            start = int(np.argmin(line))
            rolled = np.roll(line, -start).astype(int)
            edges = np.diff(np.concatenate([[0], rolled, [0]]))
            runs = np.flatnonzero(edges == -1) - np.flatnonzero(edges == 1)
            lengths.extend(runs.tolist())
        if lengths:
            best = min(best, float(np.mean(lengths)) / n)
    return best


def default_schedule(cell: VoxelCell, mu1: float, tau0: float, rho_f: float,
                     ratio: float = 1.25, first: float | None = None,
                     max_steps: int = 400) -> np.ndarray:
    """Geometric sample times ``t_k = t_1 r^(k-1)``.

    ``t_1 = 0.01 tau0 rho_f h^2 / mu1`` with ``h`` the viscous length.
    """
    if first is None:
        hv = viscous_length(cell)
        if not math.isfinite(hv):
            hv = 1.0
        first = 0.01 * tau0 * rho_f / mu1 * hv ** 2
    return first * ratio ** np.arange(max_steps)


def solve_unsteady_stokes(cell: VoxelCell, mu1: float, tau0: float, rho_f: float,
                          schedule=None, tol: float = 1e-10, method: str = "auto",
                          decay: float = 1e-6, scheme: str = "crank-nicolson",
                          startup_steps: int = 4) -> StokesCellSolution:
    """Time stepping of the relaxing Stokes flow started from ``e_i``.

    ``schedule`` is an increasing array of sample times (t > 0).  Stepping
    stops early once the mean velocity has decayed by ``decay``.  The
    first ``startup_steps`` steps are implicit Euler, which damps the
    stiff start; ``scheme="crank-nicolson"`` continues with the
    trapezoidal rule, ``scheme="euler"`` stays with implicit Euler.
    """
    if scheme not in ("crank-nicolson", "euler"):
        raise ValueError(f"unknown time scheme {scheme!r}")
    if not mu1 > 0:
        raise FluidProblemError(
            "unsteady Stokes kernel needs mu1 > 0; for mu1 = 0 use solve_neumann_B3")
    if not (tau0 > 0 and rho_f > 0):
        raise FluidProblemError("unsteady Stokes cell problem needs tau0 * rho_f > 0")
    _check_fluid_geometry(cell)
    if schedule is None:
        schedule = default_schedule(cell, mu1, tau0, rho_f)
    times = np.asarray(schedule, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) <= 0) or times[0] <= 0:
        raise FluidProblemError("schedule must be a strictly increasing array of positive times")
    rho = tau0 * rho_f
    m = cell.porosity
    sol = StokesCellSolution(cell=cell, mu1=float(mu1), tau0=float(tau0), rho_f=float(rho_f))
    space = _PoreSpace(cell)
    sol._space = space
    sol.raw_initial = (m / rho) * np.eye(3)
    nf = space.faces.size
    if nf == 0:
        sol.projected_initial = np.zeros((3, 3))
        sol.times = np.array([0.0])
        sol.samples = [np.zeros((3, 3))]
        return sol
    # discrete Leray projection of e_i / rho onto divergence-free open-face fields
    Lp = space.pressure_poisson()
    proj = SPDSolver(Lp, nullspace=space.pressure_null, tol=tol, label="initial projection")
    V = np.zeros((3, nf))
    Minv = 1.0 / space.mass.diagonal()
    for i in range(3):
        v = (space.face_axis == i).astype(float) / rho
        phi = proj.solve(space.B @ v)
        V[i] = v - Minv * (space.B.T @ phi)
    initial = np.column_stack([space.average(V[i]) for i in range(3)])
    sol.projected_initial = initial
    out_t = [0.0]
    out_B = [initial]
    ref = np.linalg.norm(initial)
    t_prev = 0.0
    worst_div = max(float(np.abs(space.divergence(V[i])).max()) for i in range(3))
    for k, t in enumerate(times):
        dt = t - t_prev
        coef = rho / dt
        theta = 1.0 if (scheme == "euler" or k < startup_steps) else 0.5
        try:
            solver = _stokes_solver(space, theta * mu1, coef, tol, method)
            for i in range(3):
                f = coef * (space.mass @ V[i])
                if theta < 1.0:
                    f -= (1.0 - theta) * mu1 * (space.laplace @ V[i])
                u, _ = solver.solve(f, np.zeros(space.cells.size))
                V[i] = u
        except SolverError as exc:
            raise SolverError(f"implicit step {k} (t={t:.3e}) failed: {exc}",
                              label="unsteady stokes") from exc
        worst_div = max(worst_div, max(float(np.abs(space.divergence(V[i])).max()) for i in range(3)))
        Bk = np.column_stack([space.average(V[i]) for i in range(3)])
        out_t.append(float(t))
        out_B.append(Bk)
        t_prev = t
        if ref == 0 or np.linalg.norm(Bk) <= decay * ref:
            break
    sol.times = np.array(out_t)
    sol.samples = out_B
    sol.divergence_residual = worst_div
    return sol


def kernel_B1(sol: StokesCellSolution) -> list:
    return [(float(t), B.copy()) for t, B in zip(sol.times, sol.samples)]


def kernel_integral(kernel: list, tail: bool = True) -> np.ndarray:
    """Trapezoidal integral of sampled kernel plus an exponential tail.

    The tail assumes ``B(t) ~ B(t_K) exp(-(t - t_K)/T)`` with ``T`` fitted
    to the norms of the last two samples.
    """
    ts = np.array([t for t, _ in kernel])
    Bs = np.array([B for _, B in kernel])
    total = np.zeros((3, 3))
    for k in range(1, len(ts)):
        total += 0.5 * (ts[k] - ts[k - 1]) * (Bs[k] + Bs[k - 1])
    if tail and len(ts) >= 3:
        n1, n0 = np.linalg.norm(Bs[-1]), np.linalg.norm(Bs[-2])
        if 0 < n1 < n0:
            T = (ts[-1] - ts[-2]) / math.log(n0 / n1)
            total += Bs[-1] * T
    return total


def solve_neumann_B3(cell: VoxelCell, tol: float = 1e-10):
    """Neumann potential problems in the pores; returns ``(R, B3, m I - B3)``.

    ``R`` is a (3, n_fluid_cells) array of mean-free potentials.
    """
    _check_fluid_geometry(cell)
    space = _PoreSpace(cell)
    g = space.grid
    m = cell.porosity
    nc = space.cells.size
    if nc == 0:
        z = np.zeros((3, 3))
        return np.zeros((3, 0)), z, z.copy()
    # interior gradient on open faces
    G = (g.grad[space.faces][:, space.cells]).tocsr()
    vol = g.volume
    W = sp.diags(np.full(space.faces.size, vol))
    L = (G.T @ W @ G).tocsr()
    solver = SPDSolver(L, nullspace=space.pressure_null, tol=tol, label="neumann potential")
    R = np.zeros((3, nc))
    B3 = np.zeros((3, 3))
    chi = space.chi
    for i in range(3):
        rhs = G.T @ (W @ (space.face_axis == i).astype(float))
        if space.pressure_null is not None:
            # compatibility holds exactly on a closed pore boundary
            comp = np.abs(space.pressure_null.T @ rhs).max()
            if comp > 1e-9 * max(np.abs(rhs).max(), 1e-300):
                raise SolverError("Neumann compatibility violated", label="neumann potential")
        r = solver.solve(rhs)
        if space.pressure_null is not None:
            for c in range(space.pressure_null.shape[1]):
                sel = space.component == c
                r[sel] -= r[sel].mean()
        R[i] = r
        grad_r = G @ r
        for k in range(3):
            interior = vol * grad_r[space.face_axis == k].sum()
            # boundary half-faces carry the prescribed normal flux
            boundary = 0.0
            if k == i:
                nb = g.shift_index(k, 1)
                pb = g.shift_index(k, -1)
                cells = space.cells
                n_bdry = np.count_nonzero(~chi[nb[cells]]) + np.count_nonzero(~chi[pb[cells]])
                boundary = 0.5 * vol * n_bdry
            B3[k, i] = interior + boundary
    return R, B3, m * np.eye(3) - B3


class StokesPermeability(BaseEstimator):
    """Estimator wrapper: ``fit(cell)`` computes the steady permeability ``B2_``."""

    def __init__(self, mu1=1.0, tol=1e-10, method="auto"):
        self.mu1 = mu1
        self.tol = tol
        self.method = method

    def fit(self, cell: VoxelCell, y=None):
        self.solution_ = solve_steady_stokes(cell, self.mu1, tol=self.tol, method=self.method)
        self.B2_ = permeability_B2(self.solution_)
        return self

    def transform(self, cell=None):
        check_is_fitted(self, "B2_")
        return self.B2_


class PotentialPermeability(BaseEstimator):
    """Estimator wrapper for the Neumann potential problem (``B3_``)."""

    def __init__(self, tol=1e-10):
        self.tol = tol

    def fit(self, cell: VoxelCell, y=None):
        self.potentials_, self.B3_, self.mI_minus_B3_ = solve_neumann_B3(cell, tol=self.tol)
        return self

    def transform(self, cell=None):
        check_is_fitted(self, "B3_")
        return self.mI_minus_B3_
