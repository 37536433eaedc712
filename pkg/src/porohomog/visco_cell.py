"""Coupled fluid-solid viscoelastic cell problems and their memory kernels.

Unknowns are face displacements on the whole periodic grid.  With
``chi`` the fluid indicator and ``s = 1 - chi``:

* ``M = mu0 <chi D:D> + nu0 <chi div div>`` is the viscous (rate) form,
  whose ``nu0`` part is dropped when the fluid is incompressible;
* ``K = lambda0 <s D:D> + p* <chi div div> + eta0 <s div div>`` is the
  elastic form, with each bulk term replaced by a divergence constraint
  when its modulus is infinite.

The families ``W^ij`` follow ``M W' + K W = 0`` from fluid initial data
``W0^ij``; the family ``W^0`` adds the unit volumetric load of the
constitutive laws.  Initial data solve a traction-free elliptic problem in
the pores (the fluid sees no condition from the skeleton at ``t = 0``);
the skeleton part of ``W0`` is zero.

Time stepping is implicit Euler.  Two initialisation steps of length
``init_fraction * t1`` come first.  The first makes the skeleton state
consistent with the fluid data; when a phase is incompressible the data
violate its constraint and this step is an instantaneous projection.  The
second step starts from the consistent state and supplies the ``t = 0``
sample, so the projection jump does not enter the kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import tensors
from .dofs import ActiveDofs
from .grid import (PeriodicGrid, divergence_load, elastic_form, strain_average,
                   strain_load, strain_product)
from .microcell import VoxelCell
from .solvers import SaddleSolver, SolverError, SPDSolver

PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
ZERO = "zero"


class ViscoProblemError(ValueError):
    """Viscoelastic cell problem is not defined for the given input."""


def _finite(x) -> bool:
    return math.isfinite(float(x))


@dataclass(frozen=True)
class ViscoBindings:
    mu0: float
    lambda0: float
    nu0: float = 0.0
    p_star: float = math.inf
    eta0: float = math.inf

    def __post_init__(self):
        if not self.mu0 > 0:
            raise ViscoProblemError("mu0 must be positive")
        if not self.lambda0 > 0:
            raise ViscoProblemError("lambda0 must be positive")
        if not (self.nu0 >= 0 and _finite(self.nu0)):
            raise ViscoProblemError("nu0 must be finite and non-negative")
        if not (self.p_star > 0 and self.eta0 > 0):
            raise ViscoProblemError("p_star and eta0 must be positive (finite or infinite)")

    @property
    def time_scale(self) -> float:
        stiff = [self.lambda0] + [v for v in (self.p_star, self.eta0) if _finite(v)]
        return self.mu0 / max(stiff)


def _fluid_weights(grid: PeriodicGrid, chi: np.ndarray) -> np.ndarray:
    return np.concatenate([grid.face_mean(chi, a) for a in range(3)])


def solve_visco_initial(cell: VoxelCell, mu0: float, nu0: float, family, tol: float = 1e-10,
                        method: str = "auto"):
    """Fluid initial data ``(W0, Q0)`` for one family.

    ``family`` is a pair ``(i, j)`` (load ``J^ij``) or ``"zero"`` (load
    ``nu0 I``).  ``W0`` is mean-free on every fluid component and zero on
    faces the fluid does not touch; ``Q0`` lives on cells.
    """
    if not mu0 > 0:
        raise ViscoProblemError("mu0 must be positive")
    if not (nu0 >= 0 and _finite(nu0)):
        raise ViscoProblemError("nu0 must be finite and non-negative")
    grid = PeriodicGrid(cell.dims)
    chi = cell.chi.ravel().astype(float)
    if family == ZERO:
        G = float(nu0) * np.eye(3)
    else:
        G = tensors.basis_matrix(*family)
    if cell.porosity == 0 or not G.any():
        return np.zeros(3 * grid.n), np.zeros(grid.n)
    dofs = ActiveDofs(elastic_form(grid, chi), n_per_component=grid.n)
    A = dofs.restrict_matrix(elastic_form(grid, mu0 * chi, nu0 * chi))
    null = dofs.translation_modes(A)
    b = dofs.restrict(-strain_load(grid, G, chi))
    solver = SPDSolver(A, nullspace=null, tol=tol, method=method,
                       label=f"visco initial {family}")
    W0 = dofs.normalize_mean(dofs.prolong(solver.solve(b)), _fluid_weights(grid, chi), A)
    div = grid.div @ W0
    Q0 = -nu0 * chi * (div + (1.0 if family == ZERO else 0.0))
    return W0, Q0


@dataclass
class ViscoCellSolution:
    cell: VoxelCell
    grid: PeriodicGrid
    bindings: ViscoBindings
    times: np.ndarray
    W0: dict
    Q0: dict
    W: dict
    Wdot: dict
    P: dict
    Q: dict
    Pi: dict
    residuals: dict = field(default_factory=dict)
    init_step: float = 0.0
    substeps: int = 1
    stopped_early: bool = False

    @property
    def families(self) -> list:
        return list(self.W)

    @property
    def chi(self) -> np.ndarray:
        return self.cell.chi.ravel().astype(float)


class _StepOperator:
    # one implicit Euler step of length dt, shared by all families

    def __init__(self, forms, dt, tol, method):
        b = forms.bindings
        A = forms.M + dt * forms.K
        self.dt = dt
        self.A = A
        if forms.B is None:
            self.solver = SPDSolver(A, nullspace=forms.null, near_null=forms.null, tol=tol,
                                    method=method, label="visco step")
            self.saddle = None
        else:
            self.saddle = SaddleSolver(A, forms.B, tol=tol, velocity_nullspace=forms.null,
                                       label="visco step",
                                       method=method if method in ("direct", "minres") else "auto")
        self.bindings = b

    def solve(self, rhs, g):
        if self.saddle is None:
            x = self.solver.solve(rhs)
            res = np.linalg.norm(self.A @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
            return x, None, float(res)
        x, lam = self.saddle.solve(rhs, g)
        B = self.saddle.B
        res = (np.linalg.norm(self.A @ x + B.T @ lam - rhs) + np.linalg.norm(B @ x - g))
        res /= max(np.linalg.norm(rhs) + np.linalg.norm(g), 1e-300)
        return x, lam, float(res)


class _ViscoForms:
    def __init__(self, cell: VoxelCell, bindings: ViscoBindings):
        self.cell = cell
        self.bindings = b = bindings
        g = self.grid = PeriodicGrid(cell.dims)
        chi = self.chi = cell.chi.ravel().astype(float)
        s = self.s = 1.0 - chi
        zero = np.zeros(g.n)
        self.fluid_incompressible = not _finite(b.p_star)
        self.solid_incompressible = not _finite(b.eta0)
        nu = 0.0 if self.fluid_incompressible else b.nu0
        self.M = elastic_form(g, b.mu0 * chi, nu * chi)
        K = b.lambda0 * elastic_form(g, s)
        bulk = zero.copy()
        if not self.fluid_incompressible:
            bulk += b.p_star * chi
        if not self.solid_incompressible:
            bulk += b.eta0 * s
        self.bulk = bulk
        self.K = (K + elastic_form(g, zero, bulk)).tocsr()
        rows = np.zeros(g.n, dtype=bool)
        if self.fluid_incompressible:
            rows |= chi > 0
        if self.solid_incompressible:
            rows |= s > 0
        self.constrained = np.flatnonzero(rows)
        self.B = (-g.volume * g.div[self.constrained]).tocsr() if self.constrained.size else None
        self.null = np.zeros((3 * g.n, 3))
        for a in range(3):
            self.null[a * g.n:(a + 1) * g.n, a] = 1.0

    def volumetric_load(self) -> tuple[np.ndarray, np.ndarray]:
        """Load of the unit volumetric term: (force vector, constraint rhs)."""
        g = self.grid
        f = divergence_load(g, self.bulk)
        gvec = np.full(self.constrained.size, g.volume)
        return f, gvec

    def pressures(self, W, Wdot, lam, dt, family):
        """Cell pressures ``(P, Q, Pi)`` from the constitutive laws or multipliers."""
        g = self.grid
        b = self.bindings
        div = g.div @ W
        shift = 1.0 if family == ZERO else 0.0
        mult = np.zeros(g.n)
        if lam is not None:
            mult[self.constrained] = lam / dt
        if self.fluid_incompressible:
            P = self.chi * mult
            Q = P.copy()
        else:
            P = -b.p_star * self.chi * (div + shift)
            Q = P - b.nu0 * self.chi * (g.div @ Wdot)
        if self.solid_incompressible:
            Pi = self.s * mult
        else:
            Pi = -b.eta0 * self.s * (div + shift)
        return P, Q, Pi


def default_visco_schedule(bindings: ViscoBindings, ratio: float = 1.25, first: float | None = None,
                           max_steps: int = 400) -> np.ndarray:
    """Geometric sample times ``t1 * ratio**k`` with ``t1 = 0.01 mu0 / stiffness``."""
    t1 = 0.01 * bindings.time_scale if first is None else float(first)
    return t1 * ratio ** np.arange(max_steps)


def solve_visco_evolution(cell: VoxelCell, bindings: ViscoBindings, schedule=None,
                          tol: float = 1e-10, method: str = "auto", families=None,
                          stall: float = 1e-8, init_fraction: float = 1e-3,
                          substeps: int = 1, initial: dict | None = None) -> ViscoCellSolution:
    """Solve both viscoelastic problem families on ``cell``.

    ``schedule`` lists increasing sample times (default geometric); the
    solution is sampled at ``t = 0`` (the initialisation step) and at every
    schedule time until all families stall.  ``substeps`` implicit steps
    are taken per sample interval.
    """
    if cell.porosity >= 1.0:
        raise ViscoProblemError("the solid phase is empty")
    b = bindings
    forms = _ViscoForms(cell, b)
    g = forms.grid
    if families is None:
        families = list(PAIRS) + [ZERO]
    if ZERO in families and forms.fluid_incompressible and forms.solid_incompressible:
        raise ViscoProblemError(
            "the volumetric family has no solution when both phases are incompressible; "
            "pass families without 'zero'")
    sched = np.asarray(default_visco_schedule(b) if schedule is None else schedule, dtype=float)
    if sched.size == 0 or np.any(np.diff(sched) <= 0) or sched[0] <= 0:
        raise ViscoProblemError("schedule must be a positive increasing sequence")
    init_dt = init_fraction * sched[0]

    W0, Q0 = {}, {}
    for fam in families:
        if initial is not None and fam in initial:
            W0[fam], Q0[fam] = initial[fam]
        else:
            W0[fam], Q0[fam] = solve_visco_initial(cell, b.mu0, b.nu0, fam, tol=tol, method=method)

    out = {k: {fam: [] for fam in families} for k in ("W", "Wdot", "P", "Q", "Pi")}
    times = [0.0]
    residual = 0.0
    f_vol, g_vol = forms.volumetric_load()
    n_con = forms.constrained.size
    state = {fam: W0[fam].copy() for fam in families}
    peak = {fam: max(np.linalg.norm(W0[fam]), 1e-300) for fam in families}

    def advance(dt, record):
        nonlocal residual
        op = _StepOperator(forms, dt, tol, method)
        incr = 0.0
        for fam in families:
            W_old = state[fam]
            rhs = forms.M @ W_old
            gvec = np.zeros(n_con)
            if fam == ZERO:
                rhs = rhs - dt * f_vol
                gvec = g_vol
            if not rhs.any() and not gvec.any():
                W_new, lam, res = np.zeros_like(W_old), (np.zeros(n_con) if n_con else None), 0.0
            else:
                try:
                    W_new, lam, res = op.solve(rhs, gvec)
                except SolverError as exc:
                    raise SolverError(f"step to t={record[0]:.4e} failed for family {fam}: {exc}",
                                      residual=exc.residual, label="visco evolution") from exc
            residual = max(residual, res)
            Wdot = (W_new - W_old) / dt
            state[fam] = W_new
            peak[fam] = max(peak[fam], np.linalg.norm(W_new))
            incr = max(incr, np.linalg.norm(W_new - W_old) / peak[fam])
            if record[1]:
                P, Q, Pi = forms.pressures(W_new, Wdot, lam, dt, fam)
                out["W"][fam].append(W_new)
                out["Wdot"][fam].append(Wdot)
                out["P"][fam].append(P)
                out["Q"][fam].append(Q)
                out["Pi"][fam].append(Pi)
        return incr

    # the first step makes the state consistent with the constraints (an
    # instantaneous projection when a phase is incompressible); the second
    # one samples the rate at t = 0+ from that consistent state
    advance(init_dt, (0.0, False))
    advance(init_dt, (0.0, True))
    t = 2.0 * init_dt
    stopped = False
    for t_next in sched:
        if t_next <= t:
            continue
        h = (t_next - t) / substeps
        incr = 0.0
        for k in range(substeps):
            incr = max(incr, advance(h, (t + (k + 1) * h, k == substeps - 1)))
        t = t_next
        times.append(float(t_next))
        # keep enough samples for the kernel derivative stencil
        if incr <= stall and len(times) >= 3:
            stopped = True
            break
    sol = ViscoCellSolution(cell=cell, grid=g, bindings=b, times=np.array(times), W0=W0, Q0=Q0,
                            W=out["W"], Wdot=out["Wdot"], P=out["P"], Q=out["Q"], Pi=out["Pi"],
                            init_step=init_dt, substeps=substeps, stopped_early=stopped)
    sol.residuals["momentum"] = residual
    sol.residuals["constitutive"] = constitutive_residual(sol)
    return sol


def constitutive_residual(sol: ViscoCellSolution) -> float:
    """Largest relative defect of the fluid and skeleton pressure laws."""
    b = sol.bindings
    g = sol.grid
    chi = sol.chi
    s = 1.0 - chi
    worst = 0.0
    for fam in sol.W:
        shift = 1.0 if fam == ZERO else 0.0
        for W, P, Pi in zip(sol.W[fam], sol.P[fam], sol.Pi[fam]):
            div = g.div @ W
            scale = max(np.abs(div).max(), 1.0)
            if _finite(b.p_star):
                fluid = np.abs(P / b.p_star + chi * (div + shift)).max()
            else:
                fluid = np.abs(chi * (div + shift)).max()
            if _finite(b.eta0):
                solid = np.abs(Pi / b.eta0 + s * (div + shift)).max()
            else:
                solid = np.abs(s * (div + shift)).max()
            worst = max(worst, fluid / scale, solid / scale)
    return float(worst)


@dataclass
class ViscoKernelSet:
    A2: np.ndarray
    A3: np.ndarray
    A4_kernel: list
    B4: np.ndarray | None
    B5_kernel: list | None
    C2_kernel: list
    C3_kernel: list
    a2_kernel: list | None
    a3_kernel: list | None
    A0f: np.ndarray
    A1f: list
    m: float

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.A4_kernel])


def _tensor(columns: dict) -> np.ndarray:
    return tensors.voigt(tensors.from_columns(columns))


def _pair_matrix(values: dict) -> np.ndarray:
    C = np.zeros((3, 3))
    for (i, j), v in values.items():
        C[i, j] = C[j, i] = v
    return C


def assemble_visco_kernels(sol: ViscoCellSolution) -> ViscoKernelSet:
    """Effective tensors, matrices and kernels from a solved cell."""
    b = sol.bindings
    g = sol.grid
    chi = sol.chi
    s = 1.0 - chi
    m = sol.cell.porosity
    vol = g.volume
    times = sol.times
    if times.size < 3:
        raise ViscoProblemError("at least three samples are needed for the kernel derivative")
    missing = [p for p in PAIRS if p not in sol.W]
    if missing:
        raise ViscoProblemError(f"families {missing} were not solved")
    I6 = tensors.identity6()
    A0f = _tensor({p: strain_average(g, sol.W0[p], b.mu0 * chi) for p in PAIRS})
    A2 = b.mu0 * m * I6 + b.mu0 * A0f

    def rate_strain(fam, k):
        return (strain_average(g, sol.Wdot[fam][k], b.mu0 * chi)
                + strain_average(g, sol.W[fam][k], b.lambda0 * s))

    A1f = np.array([_tensor({p: rate_strain(p, k) for p in PAIRS}) for k in range(times.size)])
    A3 = b.lambda0 * (1.0 - m) * I6 - b.lambda0 * A0f + b.mu0 * A1f[0]
    dA1f = np.gradient(A1f, times, axis=0, edge_order=2)
    A4 = b.mu0 * dA1f - b.lambda0 * A1f
    C2 = [_pair_matrix({p: float(np.dot(chi, g.div @ sol.W[p][k]) * vol) for p in PAIRS})
          for k in range(times.size)]
    if ZERO in sol.W:
        B4 = strain_average(g, sol.W0[ZERO], b.mu0 * chi)
        B5 = [rate_strain(ZERO, k) for k in range(times.size)]
        a2 = [float(np.dot(chi, g.div @ sol.W[ZERO][k]) * vol) for k in range(times.size)]
        B5_kernel = list(zip(times, B5))
        a2_kernel = list(zip(times, a2))
        a3_kernel = [(t, -v) for t, v in a2_kernel]
    else:
        B4 = strain_average(g, sol.W0[ZERO], b.mu0 * chi) if ZERO in sol.W0 else None
        B5_kernel = a2_kernel = a3_kernel = None
    return ViscoKernelSet(
        A2=A2, A3=A3, A4_kernel=list(zip(times, A4)), B4=B4, B5_kernel=B5_kernel,
        C2_kernel=list(zip(times, C2)), C3_kernel=[(t, -C) for t, C in zip(times, C2)],
        a2_kernel=a2_kernel, a3_kernel=a3_kernel, A0f=A0f, A1f=list(zip(times, A1f)), m=m)


def initial_energy_identity(sol: ViscoCellSolution) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of the initial-time energy identity over the pair families.

    ``lhs[p, q] = <chi mu0 D(W'^p) : D(W^q)>`` and
    ``rhs[p, q] = -lambda0 <s D(W^p) : D(W^q)> + <(s Pi^p + chi Q^p) div W^q>``,
    all at the initialisation step.  For a compressible skeleton the
    pressure pairing equals ``-(1/eta0) <Pi^p Pi^q>`` plus the fluid part.
    """
    b = sol.bindings
    g = sol.grid
    chi = sol.chi
    s = 1.0 - chi
    lhs = np.zeros((6, 6))
    rhs = np.zeros((6, 6))
    for p, kp in enumerate(PAIRS):
        Wd = sol.Wdot[kp][0]
        press = s * sol.Pi[kp][0] + chi * sol.Q[kp][0]
        for q, kq in enumerate(PAIRS):
            Wq = sol.W[kq][0]
            lhs[p, q] = strain_product(g, Wd, Wq, b.mu0 * chi)
            rhs[p, q] = (-strain_product(g, sol.W[kp][0], Wq, b.lambda0 * s)
                         + float(np.dot(press, g.div @ Wq) * g.volume))
    return lhs, rhs


def fluid_strain_defect(cell: VoxelCell, W0: np.ndarray, G: np.ndarray, mu0: float = 1.0) -> float:
    """Largest ``|mu0 D(W0) + G|`` over quadrature points carrying fluid."""
    grid = PeriodicGrid(cell.dims)
    chi = cell.chi.ravel().astype(float)
    worst = 0.0
    for a in range(3):
        e = grid.normal_strain[a] @ W0
        sel = chi > 0
        if sel.any():
            worst = max(worst, np.abs(mu0 * e[sel] + G[a, a]).max())
    for (a, c), S in grid.shear_strain.items():
        e = S @ W0
        sel = grid.edge_mean(chi, a, c) > 0
        if sel.any():
            worst = max(worst, np.abs(mu0 * e[sel] + G[a, c]).max())
    return float(worst)


class ViscoCellHomogenizer(BaseEstimator):
    """Estimator wrapper: ``fit(cell)`` stores ``solution_`` and ``kernels_``."""

    def __init__(self, mu0=1.0, lambda0=1.0, nu0=0.0, p_star=math.inf, eta0=math.inf,
                 schedule=None, tol=1e-10, method="auto"):
        self.mu0 = mu0
        self.lambda0 = lambda0
        self.nu0 = nu0
        self.p_star = p_star
        self.eta0 = eta0
        self.schedule = schedule
        self.tol = tol
        self.method = method

    def fit(self, cell: VoxelCell, y=None):
        bindings = ViscoBindings(self.mu0, self.lambda0, self.nu0, self.p_star, self.eta0)
        families = list(PAIRS)
        if _finite(self.p_star) or _finite(self.eta0):
            families.append(ZERO)
        self.solution_ = solve_visco_evolution(cell, bindings, self.schedule, tol=self.tol,
                                               method=self.method, families=families)
        self.kernels_ = assemble_visco_kernels(self.solution_)
        return self

    def transform(self, cell=None):
        check_is_fitted(self, "kernels_")
        return self.kernels_
