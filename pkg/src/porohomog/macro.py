"""Macroscale demonstration solvers on the unit cube (or unit square).

* Darcy filtration ``v = K(-grad q + rho_f F)`` with no-flux walls:
  cell-centred finite volumes, steady or transient with the state law
  ``p + (nu0/p*) dp/dt = q`` and ``(1/p*) dp/dt + div v = 0``.
* Static anisotropic Lamé system with homogeneous Dirichlet data:
  bilinear/trilinear (Q1) finite elements on the vertices of the same
  uniform grid.  The volumetric pressure term is eliminated through
  its constitutive law and integrated at element centres.

Field callables take an array of points ``X`` of shape ``(..., d)`` and
return ``(...)`` for scalars or ``(..., d)`` for vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import tensors
from .solvers import SPDSolver


class MacroError(ValueError):
    pass


def _check_spd(M: np.ndarray, what: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise MacroError(f"{what} must be a square matrix")
    if tensors.asymmetry(M) > 1e-10 * max(1.0, np.abs(M).max()):
        raise MacroError(f"{what} is not symmetric")
    if np.linalg.eigvalsh(0.5 * (M + M.T)).min() <= 0:
        raise MacroError(f"{what} is not positive definite")
    return M


@dataclass(frozen=True)
class MacroGrid:
    """Uniform grid of ``n`` cells per side on ``(0, 1)^dim``."""

    n: int
    dim: int = 3

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise MacroError("dim must be 2 or 3")
        if self.n < 2:
            raise MacroError("need at least two cells per side")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    def centres(self) -> np.ndarray:
        x = (np.arange(self.n) + 0.5) * self.h
        return np.stack(np.meshgrid(*([x] * self.dim), indexing="ij"), axis=-1)

    def nodes(self) -> np.ndarray:
        x = np.arange(self.n + 1) * self.h
        return np.stack(np.meshgrid(*([x] * self.dim), indexing="ij"), axis=-1)

    def interior_faces(self, axis: int) -> np.ndarray:
        """Centres of the faces between neighbouring cells along ``axis``."""
        axes = []
        for b in range(self.dim):
            if b == axis:
                axes.append(np.arange(1, self.n) * self.h)
            else:
                axes.append((np.arange(self.n) + 0.5) * self.h)
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


# ---------------------------------------------------------------------------
# finite-volume Darcy operators

def _kron_axis(op1d: sp.spmatrix, axis: int, grid: MacroGrid, rest=None) -> sp.csr_matrix:
    """Apply ``op1d`` along ``axis`` and ``rest`` (default identity) elsewhere."""
    mats = []
    for b in range(grid.dim):
        if b == axis:
            mats.append(op1d)
        else:
            mats.append(sp.identity(grid.n, format="csr") if rest is None else rest)
    out = mats[0]
    for M in mats[1:]:
        out = sp.kron(out, M, format="csr")
    return out.tocsr()


class _DarcyOperators:
    def __init__(self, grid: MacroGrid, K: np.ndarray):
        n, h, d = grid.n, grid.h, grid.dim
        self.grid = grid
        self.K = K
        diff = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n)) / h
        avg = sp.diags([0.5 * np.ones(n - 1), 0.5 * np.ones(n - 1)], [0, 1], shape=(n - 1, n))
        # cell gradient: central inside, one-sided at the walls
        cg = sp.lil_matrix((n, n))
        for i in range(n):
            lo, hi = max(i - 1, 0), min(i + 1, n - 1)
            cg[i, hi] += 1.0 / ((hi - lo) * h)
            cg[i, lo] -= 1.0 / ((hi - lo) * h)
        cg = cg.tocsr()
        self.D = [_kron_axis(diff, a, grid) for a in range(d)]
        avg_a = [_kron_axis(avg, a, grid) for a in range(d)]
        cell_grad = [_kron_axis(cg, b, grid) for b in range(d)]
        # G[a][b]: derivative along b sampled on interior a-faces
        self.G = [[self.D[a] if a == b else (avg_a[a] @ cell_grad[b]).tocsr()
                   for b in range(d)] for a in range(d)]
        L = sp.csr_matrix((grid.size, grid.size))
        for a in range(d):
            flux = sum(K[a, b] * self.G[a][b] for b in range(d) if K[a, b] != 0)
            if not isinstance(flux, int):
                L = L + self.D[a].T @ flux
        self.L = L.tocsr()
        self.symmetric = abs(self.L - self.L.T).max() <= 1e-12 * abs(self.L).max()

    def face_force(self, F, potential, rho_f) -> list:
        """``rho_f K F`` on the interior faces of every axis."""
        g, d = self.grid, self.grid.dim
        if potential is not None:
            phi = np.asarray(potential, dtype=float).ravel()
            comps = [[self.G[a][b] @ phi for b in range(d)] for a in range(d)]
        elif F is None:
            return [np.zeros(self.D[a].shape[0]) for a in range(d)]
        elif callable(F):
            comps = []
            for a in range(d):
                val = np.asarray(F(g.interior_faces(a)), dtype=float)
                comps.append([val[..., b].ravel() for b in range(d)])
        else:
            arr = np.asarray(F, dtype=float)
            if arr.shape != (d,) + g.shape:
                raise MacroError(f"cell forcing must have shape {(d,) + g.shape}")
            n = g.n
            avg = sp.diags([0.5 * np.ones(n - 1), 0.5 * np.ones(n - 1)], [0, 1], shape=(n - 1, n))
            comps = [[_kron_axis(avg, a, g) @ arr[b].ravel() for b in range(d)] for a in range(d)]
        return [rho_f * sum(self.K[a, b] * comps[a][b] for b in range(d)) for a in range(d)]

    def fluxes(self, q: np.ndarray, force: list) -> list:
        d = self.grid.dim
        return [force[a] - sum(self.K[a, b] * (self.G[a][b] @ q) for b in range(d))
                for a in range(d)]

    def divergence(self, fluxes: list) -> np.ndarray:
        return -sum(self.D[a].T @ fluxes[a] for a in range(self.grid.dim))

    def load(self, force: list) -> np.ndarray:
        return sum(self.D[a].T @ force[a] for a in range(self.grid.dim))


def _full_faces(grid: MacroGrid, axis: int, interior: np.ndarray) -> np.ndarray:
    """Face array along ``axis`` including the two wall faces (zero flux)."""
    shape = list(grid.shape)
    shape[axis] = grid.n - 1
    inner = interior.reshape(shape)
    pad = [(0, 0)] * grid.dim
    pad[axis] = (1, 1)
    return np.pad(inner, pad)


@dataclass
class DarcyState:
    grid: MacroGrid
    q: np.ndarray
    p: np.ndarray
    fluxes: list
    K: np.ndarray
    rho_f: float

    @property
    def face_velocity(self) -> list:
        return [_full_faces(self.grid, a, f) for a, f in enumerate(self.fluxes)]

    @property
    def v(self) -> np.ndarray:
        """Cell-centred velocity from the mean of opposite face fluxes."""
        out = []
        for a, full in enumerate(self.face_velocity):
            lo = np.take(full, np.arange(self.grid.n), axis=a)
            hi = np.take(full, np.arange(1, self.grid.n + 1), axis=a)
            out.append(0.5 * (lo + hi))
        return np.stack(out)

    @property
    def boundary_flux(self) -> float:
        total = 0.0
        for a, full in enumerate(self.face_velocity):
            total += abs(np.take(full, 0, axis=a).sum()) + abs(np.take(full, -1, axis=a).sum())
        return total * self.grid.h ** (self.grid.dim - 1)

    def divergence(self) -> np.ndarray:
        n = self.grid.n
        out = np.zeros(self.grid.shape)
        for a, full in enumerate(self.face_velocity):
            out += (np.take(full, np.arange(1, n + 1), axis=a)
                    - np.take(full, np.arange(n), axis=a)) / self.grid.h
        return out


def _prepare_K(K, dim: int) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.shape == (3, 3) and dim == 2:
        K = K[:2, :2]
    if K.shape != (dim, dim):
        raise MacroError(f"K must be {dim}x{dim}")
    return _check_spd(K, "K")


def _cell_values(f, grid: MacroGrid) -> np.ndarray:
    if f is None:
        return np.zeros(grid.size)
    if callable(f):
        return np.asarray(f(grid.centres()), dtype=float).ravel()
    arr = np.asarray(f, dtype=float)
    if arr.size != grid.size:
        raise MacroError(f"cell field must have {grid.size} values")
    return arr.ravel()


def _solve_singular(L: sp.csr_matrix, b: np.ndarray, symmetric: bool, tol: float) -> np.ndarray:
    ones = np.ones(L.shape[0])
    if symmetric:
        return SPDSolver(L, nullspace=ones[:, None], tol=tol, label="darcy").solve(b)
    # border with the mean constraint
    n = L.shape[0]
    Kb = sp.bmat([[L, sp.csr_matrix(ones[:, None])], [sp.csr_matrix(ones[None, :]), None]],
                 format="csc")
    x = spla.spsolve(Kb, np.concatenate([b, [0.0]]))
    return x[:n]


def solve_darcy_steady(K, F=None, source=None, n: int = 16, dim: int = 3, rho_f: float = 1.0,
                       potential=None, tol: float = 1e-11, compat_tol: float = 1e-10) -> DarcyState:
    """Steady Darcy problem ``div v = source`` with ``v.n = 0`` and ``<q> = 0``.

    ``potential`` gives the forcing as ``F = grad(potential)`` with
    ``potential`` sampled at cell centres; the discrete gradient is then
    used, so ``q = rho_f potential`` up to a constant exactly.
    """
    grid = MacroGrid(n, dim)
    K = _prepare_K(K, dim)
    ops = _DarcyOperators(grid, K)
    s = _cell_values(source, grid)
    if abs(s.sum()) > compat_tol * max(np.abs(s).sum(), 1.0):
        raise MacroError("source is incompatible with no-flux walls: its integral is not zero")
    force = ops.face_force(F, potential, rho_f)
    b = ops.load(force) + s
    q = _solve_singular(ops.L, b - b.mean(), ops.symmetric, tol)
    q = q - q.mean()
    fl = ops.fluxes(q, force)
    return DarcyState(grid=grid, q=q.reshape(grid.shape), p=q.reshape(grid.shape).copy(),
                      fluxes=fl, K=K, rho_f=rho_f)


@dataclass
class DarcySeries:
    grid: MacroGrid
    times: np.ndarray
    p: list
    q: list
    states: list
    energy: np.ndarray
    mass: np.ndarray
    p_star: float
    nu0: float


def solve_darcy_transient(K, F=None, p_star: float = 1.0, nu0: float = 0.0, rho_f: float = 1.0,
                          schedule=None, n: int = 16, dim: int = 3, p0=None,
                          F_of_t=None, potential_of_t=None, tol: float = 1e-12) -> DarcySeries:
    """Implicit Euler in ``p`` for the compressible Darcy system.

    ``schedule`` lists the sample times after ``t = 0``.  The forcing is
    either static (``F``) or ``F_of_t(t)`` / ``potential_of_t(t)``
    returning a static forcing description for time ``t``.
    """
    if not (p_star > 0 and math.isfinite(p_star)):
        raise MacroError("transient Darcy needs a finite positive p*")
    if nu0 < 0:
        raise MacroError("nu0 must be non-negative")
    grid = MacroGrid(n, dim)
    K = _prepare_K(K, dim)
    ops = _DarcyOperators(grid, K)
    times = np.asarray(schedule if schedule is not None else np.linspace(0.1, 1.0, 10), float)
    if times.ndim != 1 or times.size == 0 or times[0] <= 0 or np.any(np.diff(times) <= 0):
        raise MacroError("schedule must be increasing positive times")
    p = _cell_values(p0, grid)
    I = sp.identity(grid.size, format="csr")
    vol = grid.cell_volume

    def forcing(t):
        if potential_of_t is not None:
            return ops.face_force(None, potential_of_t(t), rho_f)
        return ops.face_force(F_of_t(t) if F_of_t is not None else F, None, rho_f)

    factors = {}
    out_p, out_q, states = [p.reshape(grid.shape).copy()], [p.reshape(grid.shape).copy()], []
    energy, mass = [vol * float(p @ p) / p_star], [vol * float(p.sum())]
    t_prev = 0.0
    for t in times:
        dt = t - t_prev
        c = 1.0 / (p_star * dt)
        key = round(dt, 15)
        if key not in factors:
            A = (c * I + (1.0 + nu0 * c) * ops.L).tocsc()
            factors[key] = SPDSolver(A, tol=tol, label="darcy transient") if ops.symmetric \
                else spla.splu(A)
        fac = factors[key]
        force = forcing(t)
        rhs = c * p + nu0 * c * (ops.L @ p) + ops.load(force)
        p_new = fac.solve(rhs)
        q = p_new + nu0 * c * (p_new - p) if nu0 > 0 else p_new.copy()
        p = p_new
        states.append(DarcyState(grid=grid, q=q.reshape(grid.shape), p=p.reshape(grid.shape),
                                 fluxes=ops.fluxes(q, force), K=K, rho_f=rho_f))
        out_p.append(p.reshape(grid.shape).copy())
        out_q.append(q.reshape(grid.shape).copy())
        energy.append(vol * float(p @ p) / p_star)
        mass.append(vol * float(p.sum()))
        t_prev = t
    return DarcySeries(grid=grid, times=np.concatenate([[0.0], times]), p=out_p, q=out_q,
                       states=states, energy=np.array(energy), mass=np.array(mass),
                       p_star=p_star, nu0=nu0)


# ---------------------------------------------------------------------------
# Q1 finite elements for the static Lamé system

_GAUSS = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


def _shape_functions(points: np.ndarray, dim: int, h: float):
    """Values (npts, nA) and gradients (npts, nA, dim) of Q1 shape functions."""
    corners = list(product((0, 1), repeat=dim))
    npts = points.shape[0]
    N = np.ones((npts, len(corners)))
    dN = np.ones((npts, len(corners), dim))
    for a, bits in enumerate(corners):
        for k in range(dim):
            f = points[:, k] if bits[k] else 1.0 - points[:, k]
            df = (1.0 if bits[k] else -1.0) / h
            N[:, a] *= f
            for m in range(dim):
                dN[:, a, m] *= df if m == k else f
    return N, dN, corners


@dataclass
class LameTensors:
    """Constant coefficients of ``sigma = T : grad u + S q`` split by quadrature."""

    T_full: np.ndarray
    T_centre: np.ndarray
    S_full: np.ndarray
    S_centre: np.ndarray
    pi_strain: np.ndarray
    pi_q: float
    pi_scale: float


def lame_tensors(eff, eta2, dim: int = 3, penalty: float = 1e7) -> LameTensors:
    """Split the stress of the eliminated system into full and centre parts.

    ``pi = -eta2 (C0s : D(u) + a0s div u + a1s q)``; an infinite ``eta2``
    is replaced by ``penalty`` times the largest eigenvalue of ``A0s``.
    """
    A0 = np.asarray(eff.A0s, dtype=float)
    if A0.shape != (6, 6):
        raise MacroError("A0s must be a 6x6 Mandel matrix")
    _check_spd(A0, "A0s")
    eta = float(eta2)
    if eta < 0:
        raise MacroError("eta2 must be non-negative")
    if math.isinf(eta):
        eta = penalty * np.linalg.eigvalsh(A0).max()
    I = np.eye(3)
    B0 = np.zeros((3, 3)) if eff.B0s is None else np.asarray(eff.B0s, dtype=float)
    C0 = np.zeros((3, 3)) if eff.C0s is None else np.asarray(eff.C0s, dtype=float)
    B1 = np.zeros((3, 3)) if eff.B1s is None else np.asarray(eff.B1s, dtype=float)
    a0 = float(eff.a0s or 0.0)
    a1 = float(eff.a1s or 0.0)
    T_full = tensors.devoigt(A0) + np.einsum("ij,kl->ijkl", B0, I)
    T_centre = eta * (np.einsum("ij,kl->ijkl", I, C0) + a0 * np.einsum("ij,kl->ijkl", I, I))
    S_full = B1 - I
    S_centre = eta * a1 * I
    sl = (slice(0, dim),) * 2
    return LameTensors(T_full=T_full[sl + sl], T_centre=T_centre[sl + sl], S_full=S_full[sl],
                       S_centre=S_centre[sl], pi_strain=(C0 + a0 * I)[sl], pi_q=a1,
                       pi_scale=eta)


@dataclass
class LameSolution:
    grid: MacroGrid
    u: np.ndarray
    pi: np.ndarray
    matrix: sp.csr_matrix = field(repr=False)
    residual: float = 0.0

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes()


def _element_dofs(grid: MacroGrid, corners) -> np.ndarray:
    n, d = grid.n, grid.dim
    lower = np.stack(np.meshgrid(*([np.arange(n)] * d), indexing="ij"), axis=-1).reshape(-1, d)
    strides = np.array([(n + 1) ** (d - 1 - k) for k in range(d)])
    nodes = np.stack([(lower + np.array(bits)) @ strides for bits in corners], axis=1)
    return (nodes[:, :, None] * d + np.arange(d)).reshape(len(lower), -1)


def _element_points(grid: MacroGrid, ref: np.ndarray) -> np.ndarray:
    n, d, h = grid.n, grid.dim, grid.h
    lower = np.stack(np.meshgrid(*([np.arange(n)] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return (lower[:, None, :] + ref[None, :, :]) * h


def _point_values(f, grid: MacroGrid, ref: np.ndarray, N: np.ndarray, elem_nodes, vector: bool):
    """Field values at reference points of every element: (ne, npts[, d])."""
    d = grid.dim
    if f is None:
        return None
    if callable(f):
        return np.asarray(f(_element_points(grid, ref)), dtype=float)
    arr = np.asarray(f, dtype=float)
    nn = (grid.n + 1) ** d
    if vector:
        arr = arr.reshape(d, nn)
        return np.einsum("ga,eac->egc", N, arr.T[elem_nodes])
    return np.einsum("ga,ea->eg", N, arr.reshape(nn)[elem_nodes])


def assemble_lame(lt: LameTensors, grid: MacroGrid):
    """Global Q1 matrix over all vertex dofs, plus the element bookkeeping."""
    d, h = grid.dim, grid.h
    gp = np.array(list(product(_GAUSS, repeat=d)))
    w = np.full(len(gp), h ** d / len(gp))
    N, dN, corners = _shape_functions(gp, d, h)
    centre = np.full((1, d), 0.5)
    Nc, dNc, _ = _shape_functions(centre, d, h)
    nA = len(corners)
    Ke = np.einsum("g,gaj,ijkl,gbl->aibk", w, dN, lt.T_full, dN)
    Ke += h ** d * np.einsum("aj,ijkl,bl->aibk", dNc[0], lt.T_centre, dNc[0])
    Ke = Ke.reshape(nA * d, nA * d)
    dofs = _element_dofs(grid, corners)
    rows = np.repeat(dofs, nA * d, axis=1).ravel()
    cols = np.tile(dofs, (1, nA * d)).ravel()
    vals = np.tile(Ke.ravel(), len(dofs))
    ndof = (grid.n + 1) ** d * d
    A = sp.csr_matrix((vals, (rows, cols)), shape=(ndof, ndof))
    return A, dict(gp=gp, w=w, N=N, dN=dN, Nc=Nc, dNc=dNc, corners=corners, dofs=dofs,
                   elem_nodes=dofs[:, ::d] // d, centre=centre)


def _boundary_dofs(grid: MacroGrid) -> np.ndarray:
    X = grid.nodes().reshape(-1, grid.dim)
    on = np.any((X < 1e-12) | (X > 1 - 1e-12), axis=1)
    return (np.flatnonzero(on)[:, None] * grid.dim + np.arange(grid.dim)).ravel()


def solve_lame_static(eff, q=None, F=None, eta2=1.0, n: int = 16, dim: int = 3,
                      rho_hat: float | None = None, tol: float = 1e-11,
                      penalty: float = 1e7) -> LameSolution:
    """Solve ``div(A0s:D(u) + B0s div u + B1s q - (q + pi) I) + rho_hat F = 0``.

    ``u = 0`` on the boundary; ``pi`` is eliminated through its
    constitutive law and returned per element.  ``q`` and ``F`` are
    callables of position or nodal arrays.
    """
    grid = MacroGrid(n, dim)
    lt = lame_tensors(eff, eta2, dim, penalty)
    rho = rho_hat if rho_hat is not None else (getattr(eff, "rho_hat", None) or 1.0)
    A, bk = assemble_lame(lt, grid)
    ne = len(bk["dofs"])
    nA = len(bk["corners"])
    b = np.zeros(A.shape[0])
    Fg = _point_values(F, grid, bk["gp"], bk["N"], bk["elem_nodes"], vector=True)
    if Fg is not None:
        be = rho * np.einsum("g,ga,egi->eai", bk["w"], bk["N"], Fg)
        np.add.at(b, bk["dofs"].ravel(), be.reshape(ne, nA * dim).ravel())
    qg = _point_values(q, grid, bk["gp"], bk["N"], bk["elem_nodes"], vector=False)
    qc = _point_values(q, grid, bk["centre"], bk["Nc"], bk["elem_nodes"], vector=False)
    if qg is not None:
        be = -np.einsum("g,eg,ij,gaj->eai", bk["w"], qg, lt.S_full, bk["dN"])
        be -= grid.h ** dim * np.einsum("e,ij,aj->eai", qc[:, 0], lt.S_centre, bk["dNc"][0])
        np.add.at(b, bk["dofs"].ravel(), be.reshape(ne, nA * dim).ravel())
    fixed = _boundary_dofs(grid)
    free = np.setdiff1d(np.arange(A.shape[0]), fixed)
    Af = A[free][:, free].tocsr()
    bf = b[free]
    u = np.zeros(A.shape[0])
    if Af.shape[0]:
        if abs(Af - Af.T).max() <= 1e-12 * abs(Af).max():
            u[free] = SPDSolver(Af, tol=tol, label="lame").solve(bf)
        else:
            u[free] = spla.spsolve(Af.tocsc(), bf)
    res = float(np.linalg.norm(Af @ u[free] - bf) / max(np.linalg.norm(bf), 1e-300)) \
        if Af.shape[0] else 0.0
    # pressure per element at its centre
    ue = u[bk["dofs"]].reshape(ne, nA, dim)
    grad_c = np.einsum("aj,eai->eij", bk["dNc"][0], ue)
    strain = 0.5 * (grad_c + np.transpose(grad_c, (0, 2, 1)))
    pi = -lt.pi_scale * np.einsum("ij,eij->e", lt.pi_strain, strain)
    if qc is not None:
        pi -= lt.pi_scale * lt.pi_q * qc[:, 0]
    nodes_shape = (grid.n + 1,) * dim
    U = u.reshape(-1, dim).T.reshape((dim,) + nodes_shape)
    return LameSolution(grid=grid, u=U, pi=pi.reshape(grid.shape), matrix=Af, residual=res)


# ---------------------------------------------------------------------------
# manufactured solutions

def _sine_bump(X: np.ndarray):
    """``phi = prod sin(pi x_k)`` with its Hessian."""
    d = X.shape[-1]
    s = np.sin(np.pi * X)
    c = np.cos(np.pi * X)
    phi = np.prod(s, axis=-1)
    H = np.empty(X.shape[:-1] + (d, d))
    for j in range(d):
        for l in range(d):
            if j == l:
                H[..., j, l] = -np.pi ** 2 * phi
            else:
                others = [m for m in range(d) if m not in (j, l)]
                rest = np.prod(s[..., others], axis=-1) if others else 1.0
                H[..., j, l] = np.pi ** 2 * c[..., j] * c[..., l] * rest
    return phi, H


def lame_manufactured(lt: LameTensors, rho_hat: float = 1.0):
    """Exact field ``u_k = prod sin(pi x)`` and the forcing that produces it."""
    T = lt.T_full + lt.T_centre

    def exact(X):
        phi, _ = _sine_bump(np.asarray(X, dtype=float))
        d = X.shape[-1]
        return np.repeat(phi[..., None], d, axis=-1)

    def forcing(X):
        _, H = _sine_bump(np.asarray(X, dtype=float))
        # div sigma_i = sum_jkl T_ijkl d_j d_l u_k with u_k = phi for all k
        return -np.einsum("ijkl,...jl->...i", T, H) / rho_hat

    return exact, forcing


def darcy_manufactured(K: np.ndarray):
    """``q = prod cos(pi x)`` (no-flux) and the source with ``F = 0``."""
    K = np.asarray(K, dtype=float)

    def exact(X):
        return np.prod(np.cos(np.pi * X), axis=-1)

    def source(X):
        # div(-K grad q) for the separable cosine field
        d = X.shape[-1]
        c = np.cos(np.pi * X)
        s = np.sin(np.pi * X)
        out = np.zeros(X.shape[:-1])
        for a in range(d):
            for b in range(d):
                if a == b:
                    term = -np.pi ** 2 * np.prod(c, axis=-1)
                else:
                    others = [m for m in range(d) if m not in (a, b)]
                    rest = np.prod(c[..., others], axis=-1) if others else 1.0
                    term = np.pi ** 2 * s[..., a] * s[..., b] * rest
                out -= K[a, b] * term
        return out

    return exact, source


def observed_orders(ns, errors) -> list:
    return [math.log(errors[k] / errors[k + 1]) / math.log(ns[k + 1] / ns[k])
            for k in range(len(ns) - 1)]


def darcy_convergence(K=None, ns=(16, 32, 64), dim: int = 2):
    """L2 errors of the steady solver against the cosine solution."""
    K = np.diag([2.0, 1.0, 1.0][:dim]) if K is None else np.asarray(K, dtype=float)[:dim, :dim]
    exact, source = darcy_manufactured(K)
    errors = []
    for n in ns:
        grid = MacroGrid(n, dim)
        src = source(grid.centres())
        st = solve_darcy_steady(K, source=src - src.mean(), n=n, dim=dim)
        qe = exact(grid.centres())
        e = st.q - (qe - qe.mean())
        errors.append(math.sqrt(grid.cell_volume * float(np.sum(e ** 2))))
    return list(ns), errors, observed_orders(ns, errors)


def lame_convergence(eff=None, eta2=1.0, ns=(16, 32, 64), dim: int = 2):
    """L2 nodal errors of the Q1 solver against the sine solution."""
    if eff is None:
        eff = synthetic_effective_set()
    lt = lame_tensors(eff, eta2, dim)
    exact, forcing = lame_manufactured(lt)
    errors = []
    for n in ns:
        sol = solve_lame_static(eff, F=forcing, eta2=eta2, n=n, dim=dim, rho_hat=1.0)
        X = sol.grid.nodes()
        e = np.moveaxis(sol.u, 0, -1) - exact(X)
        errors.append(math.sqrt(sol.grid.h ** dim * float(np.sum(e ** 2))))
    return list(ns), errors, observed_orders(ns, errors)


def synthetic_effective_set(A0s=None, B0s=None, C0s=None, B1s=None, a0s=1.0, a1s=0.0,
                            rho_hat=1.0):
    """A stand-in coefficient set (identity stiffness by default)."""
    from .cell_elastic import EffectiveElasticSet
    z = np.zeros((3, 3))
    return EffectiveElasticSet(
        A0s=np.eye(6) if A0s is None else np.asarray(A0s, dtype=float),
        A1s=np.zeros((6, 6)),
        B0s=z.copy() if B0s is None else np.asarray(B0s, dtype=float),
        B1s=z.copy() if B1s is None else np.asarray(B1s, dtype=float),
        C0s=z.copy() if C0s is None else np.asarray(C0s, dtype=float),
        a0s=a0s, a1s=a1s, a2s=None, m=0.0, rho_hat=rho_hat)


def write_field_csv(path, name: str, points: np.ndarray, values: np.ndarray) -> None:
    """``x,y,z,value`` rows after a ``# field=... dims=...`` header."""
    pts = np.asarray(points, dtype=float)
    dims = pts.shape[:-1]
    pts = pts.reshape(-1, pts.shape[-1])
    vals = np.asarray(values, dtype=float).reshape(-1)
    if pts.shape[1] == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# field={name} dims={'x'.join(str(k) for k in dims)}\n")
        fh.write("x,y,z,value\n")
        for p, v in zip(pts, vals):
            fh.write(f"{float(p[0])!r},{float(p[1])!r},{float(p[2])!r},{float(v)!r}\n")
