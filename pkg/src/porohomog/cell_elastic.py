"""Periodic elastic cell problems on the solid skeleton and the effective
elastic coefficients built from them.

With ``s = 1 - chi`` the solid indicator, the four problem families are

* ``U^ij``: ``<s (D(U) + J^ij) : D(V)> - <Pi div V> = 0``,
  ``(lambda0/eta0) Pi + s div U = 0``;
* ``U0``: ``lambda0 <s D(U) : D(V)> - <Pi div V> = 0``,
  ``Pi / eta0 + s (div U + 1) = 0``;
* ``U1``: as ``U0`` with fluid pressure load ``<chi div V>`` and
  ``Pi / eta0 + s div U = 0``;
* ``U2``: as ``U1`` with a nonlocal volumetric term fixed by the mean of
  its own divergence over the solid.

For finite ``eta0`` the solid pressure is eliminated and all families
share one SPD matrix.  ``eta0 = inf`` turns the pressure into the
multiplier of the constraint ``s div U = const`` and is solved as a
saddle-point problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import tensors
from .dofs import ActiveDofs
from .grid import (PeriodicGrid, divergence_load, elastic_form, strain_average,
                   strain_load, strain_product)
from .microcell import VoxelCell
from .solvers import SaddleSolver, SolverError, SPDSolver

PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))


class CellProblemError(ValueError):
    """Cell problem is not defined for the given geometry or parameters."""


def _finite(x) -> bool:
    return x is not None and math.isfinite(float(x))


@dataclass
class ElasticCellSolution:
    cell: VoxelCell
    grid: PeriodicGrid
    lambda0: float
    eta0: float
    U: dict = field(default_factory=dict)
    Pi: dict = field(default_factory=dict)
    nonlocal_shift: float = 0.0
    residuals: dict = field(default_factory=dict)
    iterations: dict = field(default_factory=dict)

    @property
    def solid(self) -> np.ndarray:
        return 1.0 - self.cell.chi.ravel().astype(float)

    def divergence(self, key) -> np.ndarray:
        return self.grid.div @ self.U[key]


@dataclass
class EffectiveElasticSet:
    A0s: np.ndarray
    A1s: np.ndarray
    B0s: np.ndarray
    B1s: np.ndarray | None
    C0s: np.ndarray
    a0s: float
    a1s: float | None
    a2s: float | None
    m: float
    rho_hat: float | None = None

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("A0s", "A1s", "B0s", "B1s", "C0s", "a0s", "a1s", "a2s", "m", "rho_hat")}


class _ElasticSystem:
    # shared matrices for one geometry and parameter binding

    def __init__(self, cell: VoxelCell, lambda0: float, eta0: float, tol: float, method: str):
        self.cell = cell
        self.grid = PeriodicGrid(cell.dims)
        g = self.grid
        self.s = 1.0 - cell.chi.ravel().astype(float)
        self.chi = cell.chi.ravel().astype(float)
        self.lambda0 = float(lambda0)
        self.eta0 = float(eta0)
        self.tol = tol
        K_shear = elastic_form(g, self.s)
        self.dofs = ActiveDofs(K_shear, n_per_component=g.n)
        self.weights = np.concatenate([g.face_mean(self.s, a) for a in range(3)])
        if _finite(eta0):
            ratio = self.eta0 / self.lambda0
            self.A_full = K_shear + ratio * elastic_form(g, np.zeros(g.n), self.s)
            self.A = self.dofs.restrict_matrix(self.A_full)
            self.null = self.dofs.translation_modes(self.A)
            self.solver = SPDSolver(self.A, nullspace=self.null, tol=tol, method=method,
                                    label="elastic cell")
        else:
            self.A_full = K_shear
            self.A = self.dofs.K
            solid_cells = np.flatnonzero(self.s > 0)
            self.solid_cells = solid_cells
            # weak divergence on solid cells: (B u)_c = -|cell| div u
            D = g.div[solid_cells]
            self.B = -g.volume * self.dofs.restrict_columns(D)
            self.null = self.dofs.translation_modes(self.A)
            self.saddle = SaddleSolver(self.A, self.B, tol=tol, velocity_nullspace=self.null,
                                       label="incompressible elastic cell",
                                       method=method if method in ("direct", "minres") else "auto")

    def load(self, family) -> np.ndarray:
        g = self.grid
        if isinstance(family, tuple):
            return -strain_load(g, tensors.basis_matrix(*family), self.s)
        if family == "U0":
            return -self.eta0 * divergence_load(g, self.s) if _finite(self.eta0) else np.zeros(3 * g.n)
        if family == "U1":
            return divergence_load(g, self.chi)
        raise KeyError(family)

    def solve(self, family):
        """Return (U_full, Pi_cells, residual, iterations)."""
        g = self.grid
        f = self.load(family)
        scale = 1.0 if isinstance(family, tuple) else self.lambda0
        if _finite(self.eta0):
            fa = self.dofs.restrict(f) / scale
            x = self.solver.solve(fa)
            res = np.linalg.norm(self.A @ x - fa) / max(np.linalg.norm(fa), 1e-300)
            U = self.dofs.prolong(x)
            U = self.dofs.normalize_mean(U, self.weights, self.A)
            divU = g.div @ U
            if isinstance(family, tuple):
                Pi = -(self.eta0 / self.lambda0) * self.s * divU
            elif family == "U0":
                Pi = -self.eta0 * self.s * (divU + 1.0)
            else:
                Pi = -self.eta0 * self.s * divU
            return U, Pi, float(res), self.solver.iterations[-1] if self.solver.iterations else 0
        # constrained form: scale * A U + B^T Pi = f, B U = |cell| c
        ns = self.solid_cells.size
        gvec = np.zeros(ns)
        if family == "U0":
            gvec[:] = g.volume
        fa = self.dofs.restrict(f)
        try:
            u, p = self.saddle.solve(fa / scale, gvec)
            p = scale * p
        except SolverError as exc:
            if family == "U0" and self.cell.porosity == 0:
                raise CellProblemError(
                    "volumetric cell problem is incompatible with an incompressible "
                    "solid filling the whole cell") from exc
            raise
        res = np.linalg.norm(scale * self.A @ u + self.B.T @ p - fa) + np.linalg.norm(self.B @ u - gvec)
        res /= max(np.linalg.norm(fa) + np.linalg.norm(gvec), 1e-300)
        U = self.dofs.normalize_mean(self.dofs.prolong(u), self.weights, self.A)
        Pi = np.zeros(g.n)
        Pi[self.solid_cells] = p
        return U, Pi, float(res), 1


def solve_elastic_cell(cell: VoxelCell, lambda0: float, eta0: float, tol: float = 1e-10,
                       method: str = "auto") -> ElasticCellSolution:
    """Solve all nine elastic cell problems on ``cell``.

    ``eta0`` may be ``math.inf`` for an incompressible skeleton.
    """
    if cell.porosity >= 1.0:
        raise CellProblemError("the solid phase is empty")
    if not lambda0 > 0:
        raise CellProblemError("lambda0 must be positive")
    if not eta0 > 0:
        raise CellProblemError("eta0 must be positive (finite or infinite)")
    if not _finite(eta0) and cell.porosity == 0:
        raise CellProblemError(
            "volumetric cell problem is incompatible with an incompressible solid "
            "filling the whole cell")
    system = _ElasticSystem(cell, lambda0, eta0, tol, method)
    sol = ElasticCellSolution(cell=cell, grid=system.grid, lambda0=float(lambda0),
                              eta0=float(eta0))
    for key in list(PAIRS) + ["U0", "U1"]:
        U, Pi, res, it = system.solve(key)
        sol.U[key], sol.Pi[key] = U, Pi
        sol.residuals[key] = res
        sol.iterations[key] = it
    # U2 = U1 + k U0; the nonlocal condition is affine in k, so two
    # evaluations of its defect give the root exactly (secant step)
    m = cell.porosity
    s_mean = lambda Pi: float(np.dot(system.s, Pi) * system.grid.volume)

    def defect(k):
        return s_mean(sol.Pi["U1"] + k * sol.Pi["U0"]) - m

    d0, d1 = defect(0.0), defect(1.0)
    if d1 == d0:
        raise SolverError("nonlocal volumetric problem is degenerate", label="elastic cell U2")
    k = -d0 / (d1 - d0)
    if abs(defect(k)) > 1e-10 * max(1.0, abs(d0)):
        raise SolverError("nonlocal volumetric condition not met", label="elastic cell U2")
    sol.U["U2"] = sol.U["U1"] + k * sol.U["U0"]
    sol.Pi["U2"] = sol.Pi["U1"] + k * sol.Pi["U0"]
    sol.residuals["U2"] = max(sol.residuals["U1"], sol.residuals["U0"])
    sol.nonlocal_shift = float(np.dot(system.s, sol.divergence("U2")) * system.grid.volume)
    sol._system = system
    return sol


def assemble_effective_elastic(sol: ElasticCellSolution, rho_f: float | None = None,
                               rho_s: float | None = None) -> EffectiveElasticSet:
    g = sol.grid
    s = sol.solid
    m = sol.cell.porosity
    if m >= 1.0:
        raise CellProblemError("the solid phase is empty")
    vol = g.volume
    cols = {key: strain_average(g, sol.U[key], s) for key in PAIRS}
    A1s = tensors.voigt(tensors.from_columns(cols))
    A0s = tensors.identity6() + A1s
    B0s = strain_average(g, sol.U["U0"], s)
    divs = {key: float(np.dot(s, sol.divergence(key)) * vol) for key in list(PAIRS) + ["U0", "U1"]}
    C0s = np.zeros((3, 3))
    for (i, j) in PAIRS:
        C0s[i, j] = C0s[j, i] = divs[(i, j)]
    a0s = 1.0 - m + divs["U0"]
    if m > 0:
        B1s = strain_average(g, sol.U["U1"], s) / m
        a1s = divs["U1"] / m
        inv_eta = 0.0 if not _finite(sol.eta0) else 1.0 / sol.eta0
        a2s = (m * inv_eta - divs["U1"]) / m
    else:
        B1s = a1s = a2s = None
    rho_hat = None
    if rho_f is not None and rho_s is not None:
        rho_hat = m * rho_f + (1.0 - m) * rho_s
    return EffectiveElasticSet(A0s=A0s, A1s=A1s, B0s=B0s, B1s=B1s, C0s=C0s, a0s=a0s,
                               a1s=a1s, a2s=a2s, m=m, rho_hat=rho_hat)


def energy_identity(sol: ElasticCellSolution) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of the reciprocity identity for the U^ij family.

    Returns ``(lhs, rhs)`` as 6x6 arrays over pairs with
    ``lhs[p, q] = <D(U^p)>_s : J^q`` and
    ``rhs[p, q] = -<D(U^p) : D(U^q)>_s - (lambda0/eta0) <Pi^p Pi^q>``.
    """
    g = sol.grid
    s = sol.solid
    lhs = np.zeros((6, 6))
    rhs = np.zeros((6, 6))
    ratio = sol.lambda0 / sol.eta0 if _finite(sol.eta0) else 0.0
    for p, kp in enumerate(PAIRS):
        avg = strain_average(g, sol.U[kp], s)
        for q, kq in enumerate(PAIRS):
            lhs[p, q] = tensors.contract(avg, tensors.basis_matrix(*kq))
            rhs[p, q] = (-strain_product(g, sol.U[kp], sol.U[kq], s)
                         - ratio * float(np.dot(sol.Pi[kp], sol.Pi[kq]) * g.volume))
    return lhs, rhs


def pde_residuals(sol: ElasticCellSolution) -> dict:
    return dict(sol.residuals)


class ElasticCellHomogenizer(BaseEstimator):
    """Estimator wrapper: ``fit(cell)`` solves the cell problems and stores
    ``solution_`` and ``effective_``.
    """

    def __init__(self, lambda0=1.0, eta0=1.0, tol=1e-10, method="auto", rho_f=None, rho_s=None):
        self.lambda0 = lambda0
        self.eta0 = eta0
        self.tol = tol
        self.method = method
        self.rho_f = rho_f
        self.rho_s = rho_s

    def fit(self, cell: VoxelCell, y=None):
        self.solution_ = solve_elastic_cell(cell, self.lambda0, self.eta0, tol=self.tol,
                                            method=self.method)
        self.effective_ = assemble_effective_elastic(self.solution_, self.rho_f, self.rho_s)
        return self

    def transform(self, cell=None):
        check_is_fitted(self, "effective_")
        return self.effective_
