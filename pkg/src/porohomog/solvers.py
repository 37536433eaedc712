"""Sparse linear solvers: preconditioned CG with a declared nullspace,
shifted direct SPD solves and regularised saddle-point solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    """A Krylov or direct solve failed to reach its tolerance."""

    def __init__(self, message, residual=None, label=None):
        if label:
            message = f"[{label}] {message}"
        super().__init__(message)
        self.residual = residual
        self.label = label


class IncompatibleRHS(SolverError):
    """The right-hand side has a component along the operator's nullspace."""


@dataclass
class SolveInfo:
    iterations: int = 0
    residual: float = 0.0
    method: str = ""
    extra: dict = field(default_factory=dict)


class SparseOperator:
    """Square linear map given by a matrix or a matvec callable."""

    def __init__(self, matvec, n: int, symmetric: bool = False):
        if sp.issparse(matvec) or isinstance(matvec, np.ndarray):
            mat = matvec
            if mat.shape != (n, n):
                raise ValueError(f"operator shape {mat.shape} does not match n={n}")
            self.matrix = mat
            self._apply = lambda x: mat @ x
        else:
            self.matrix = None
            self._apply = matvec
        self.n = int(n)
        self.symmetric = bool(symmetric)

    @classmethod
    def from_matrix(cls, A, symmetric=False):
        return cls(A, A.shape[0], symmetric)

    def __matmul__(self, x):
        return self._apply(np.asarray(x, dtype=float))

    def check_symmetry(self, probes: int = 3, seed: int = 0) -> float:
        """Largest relative mismatch of <Ax, y> and <x, Ay> on random probes."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(probes):
            x, y = rng.standard_normal(self.n), rng.standard_normal(self.n)
            ax, ay = self @ x, self @ y
            scale = max(abs(np.dot(ax, y)), np.linalg.norm(ax) * np.linalg.norm(y), 1e-300)
            worst = max(worst, abs(np.dot(ax, y) - np.dot(x, ay)) / scale)
        return worst


def _as_operator(A):
    if isinstance(A, SparseOperator):
        return A
    return SparseOperator.from_matrix(A)


def orthonormal_columns(N) -> np.ndarray | None:
    if N is None:
        return None
    N = np.asarray(N, dtype=float)
    if N.ndim == 1:
        N = N[:, None]
    if N.shape[1] == 0:
        return None
    q, r = np.linalg.qr(N)
    keep = np.abs(np.diag(r)) > 1e-12 * max(np.abs(np.diag(r)).max(), 1e-300)
    return q[:, keep] if keep.any() else None


def project_out(x: np.ndarray, Q: np.ndarray | None) -> np.ndarray:
    if Q is None:
        return x
    return x - Q @ (Q.T @ x)


def check_compatible(b, Q, tol, label=None):
    if Q is None:
        return
    nb = np.linalg.norm(b)
    comp = np.linalg.norm(Q.T @ b)
    if nb > 0 and comp > tol * nb and comp > 1e-300:
        raise IncompatibleRHS(
            f"incompatible right-hand side: nullspace component {comp:.3e} "
            f"(relative {comp / nb:.3e})", residual=comp / nb, label=label)


def amg_preconditioner(A, near_null=None):
    """Smoothed-aggregation AMG V-cycle as a LinearOperator."""
    import pyamg

    B = None if near_null is None else np.asarray(near_null, dtype=float)
    ml = pyamg.smoothed_aggregation_solver(sp.csr_matrix(A), B=B, symmetry="hermitian",
                                           max_coarse=100)
    return ml.aspreconditioner(cycle="V")


def cg_solve(A, b, tol: float = 1e-9, maxiter: int = 2000, nullspace=None, M=None,
             x0=None, label=None, info: SolveInfo | None = None) -> np.ndarray:
    """Preconditioned conjugate gradients for SPD or consistent PSD systems.

    ``nullspace`` holds basis vectors of ker A (columns).  The right-hand
    side must be orthogonal to it and the returned solution is.
    """
    op = _as_operator(A)
    b = np.asarray(b, dtype=float)
    Q = orthonormal_columns(nullspace)
    check_compatible(b, Q, max(tol, 1e-10), label)
    b = project_out(b, Q)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        if info is not None:
            info.iterations, info.residual, info.method = 0, 0.0, "cg"
        return np.zeros(op.n)
    precond = (lambda r: r) if M is None else (lambda r: M @ r)
    x = np.zeros(op.n) if x0 is None else project_out(np.array(x0, dtype=float), Q)
    r = b - op @ x
    z = project_out(precond(r), Q)
    p = z.copy()
    rz = np.dot(r, z)
    res = np.linalg.norm(r) / nb
    it = 0
    while res > tol and it < maxiter:
        Ap = op @ p
        pAp = np.dot(p, Ap)
        if pAp <= 0:
            raise SolverError(f"operator not positive on search direction (pAp={pAp:.3e})",
                              residual=res, label=label)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        # refresh the recursive residual now and then to avoid drift
        if it % 50 == 0:
            r = b - op @ x
        res = np.linalg.norm(r) / nb
        if res <= tol:
            break
        z = project_out(precond(r), Q)
        rz_new = np.dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    x = project_out(x, Q)
    res = np.linalg.norm(b - op @ x) / nb
    if info is not None:
        info.iterations, info.residual, info.method = it, res, "cg"
    if res > tol:
        raise SolverError(f"CG did not converge in {it} iterations (residual {res:.3e})",
                          residual=res, label=label)
    return x


def _shift_scale(A) -> float:
    d = np.abs(A.diagonal())
    return float(d.max()) if d.size and d.max() > 0 else 1.0


class ShiftedFactor:
    """LU of ``K + shift`` used as an inner solver for iterative refinement
    on the unshifted system ``K``.
    """

    def __init__(self, K, shift):
        self.K = sp.csc_matrix(K)
        # the shifted matrices are SPD or quasi-definite, so a symmetric
        # ordering without pivoting is stable and keeps fill low
        self.lu = spla.splu(sp.csc_matrix(K + shift), permc_spec="MMD_AT_PLUS_A",
                            diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))

    def solve(self, rhs, tol=1e-12, maxiter=60, Q=None, label=None, scale=None):
        rhs = np.asarray(rhs, dtype=float)
        single = rhs.ndim == 1
        R = rhs[:, None] if single else rhs
        X = np.zeros_like(R)
        nb = np.linalg.norm(R, axis=0) if scale is None else np.full(R.shape[1], scale)
        nb[nb == 0] = 1.0
        for it in range(maxiter + 1):
            res_vec = R - self.K @ X
            if Q is not None:
                res_vec -= Q @ (Q.T @ res_vec)
            res = np.linalg.norm(res_vec, axis=0) / nb
            if np.all(res <= tol):
                break
            if it == maxiter:
                raise SolverError(f"refined direct solve stalled at residual {res.max():.3e}",
                                  residual=float(res.max()), label=label)
            D = self.lu.solve(res_vec)
            if Q is not None:
                D -= Q @ (Q.T @ D)
            X += D
        return X[:, 0] if single else X


def direct_spd_solve(A, b, tol=1e-11, nullspace=None, label=None,
                     info: SolveInfo | None = None) -> np.ndarray:
    """Sparse LU of ``A + delta I`` refined on ``A``; handles a declared nullspace."""
    Q = orthonormal_columns(nullspace)
    b = np.asarray(b, dtype=float)
    check_compatible(b, Q, max(tol, 1e-10), label)
    b = project_out(b, Q)
    A = sp.csc_matrix(A)
    shift = 1e-9 * _shift_scale(A) if Q is not None else 0.0
    fac = ShiftedFactor(A, shift * sp.identity(A.shape[0], format="csc"))
    x = fac.solve(b, tol=tol, Q=Q, label=label)
    x = project_out(x, Q)
    if info is not None:
        nb = np.linalg.norm(b) or 1.0
        info.iterations, info.residual, info.method = 1, float(np.linalg.norm(b - A @ x) / nb), "lu"
    return x


def _block_minres(K, rhs, precond, tol, maxiter, Q, label, scale):
    # scipy's MINRES stops on a preconditioned estimate; restart until the
    # true residual meets the tolerance
    # the preconditioned norm can sit orders of magnitude below the true
    # one, so the internal target starts well below tol and tightens
    x = np.zeros_like(rhs)
    margin = 1e-3
    for _ in range(8):
        r = rhs - K @ x
        if Q is not None:
            r -= Q @ (Q.T @ r)
        res = np.linalg.norm(r) / scale
        if res <= tol:
            return x, res
        rtol = min(max(margin * tol * scale / max(np.linalg.norm(r), 1e-300), 1e-15), 0.1)
        dx, _ = spla.minres(K, r, M=precond, rtol=rtol, maxiter=maxiter)
        margin *= 0.03
        if Q is not None:
            dx -= Q @ (Q.T @ dx)
        x += dx
    r = rhs - K @ x
    if Q is not None:
        r -= Q @ (Q.T @ r)
    res = np.linalg.norm(r) / scale
    if res > tol:
        raise SolverError(f"MINRES did not reach tolerance (residual {res:.3e})",
                          residual=res, label=label)
    return x, res


class SaddleSolver:
    """Reusable solver for ``[[A, B^T], [B, 0]]`` with many right-hand sides.

    A is SPD on ker B.  ``pressure_nullspace`` spans ker B^T (constants by
    default when B^T annihilates them); g must be orthogonal to it and the
    returned p is.  ``velocity_nullspace`` spans ker A intersected with
    ker B; f must be orthogonal to it.

    ``method`` is ``"direct"`` (regularised KKT factorisation with
    iterative refinement), ``"minres"`` (block-diagonal preconditioned
    MINRES) or ``"auto"``.  For MINRES, ``velocity_precond`` approximates
    A^{-1} (AMG by default) and ``schur_precond`` approximates the inverse
    Schur complement (inverse of diag(B diag(A)^-1 B^T) by default).
    """

    direct_limit = 6000

    def __init__(self, A, B, tol: float = 1e-10, pressure_nullspace=None,
                 velocity_nullspace=None, label=None, method: str = "auto",
                 velocity_precond=None, schur_precond=None, maxiter: int = 5000):
        A = sp.csr_matrix(A)
        B = sp.csr_matrix(B)
        self.A, self.B = A, B
        n, k = A.shape[0], B.shape[0]
        self.n, self.k = n, k
        self.tol, self.label, self.maxiter = tol, label, maxiter
        if pressure_nullspace is None and k:
            ones = np.ones(k)
            bt1 = np.linalg.norm(B.T @ ones)
            if bt1 <= 1e-12 * max(spla.norm(B), 1e-300) * np.sqrt(k):
                pressure_nullspace = ones
        self.Qp = orthonormal_columns(pressure_nullspace)
        self.Qu = orthonormal_columns(velocity_nullspace)
        self.K0 = sp.bmat([[A, B.T], [B, None]], format="csr")
        Q = None
        if self.Qp is not None or self.Qu is not None:
            blocks = []
            if self.Qu is not None:
                blocks.append(np.vstack([self.Qu, np.zeros((k, self.Qu.shape[1]))]))
            if self.Qp is not None:
                blocks.append(np.vstack([np.zeros((n, self.Qp.shape[1])), self.Qp]))
            Q = np.hstack(blocks)
        self.Q = Q
        if method == "auto":
            method = "direct" if n + k <= self.direct_limit else "minres"
        self.method = method
        if method == "direct":
            delta = 1e-9 * _shift_scale(A)
            shift = sp.diags(np.concatenate([np.full(n, delta), np.full(k, -delta)]))
            self._fac = ShiftedFactor(self.K0, shift)
        elif method == "minres":
            if velocity_precond is None:
                velocity_precond = amg_preconditioner(
                    A + 1e-12 * _shift_scale(A) * sp.identity(n), self.Qu)
            if schur_precond is None:
                dA = A.diagonal()
                dA = np.where(dA > 0, dA, 1.0)
                dS = np.asarray((B.multiply(B)) @ (1.0 / dA)).ravel()
                dS = np.where(dS > 0, dS, max(dS.max(), 1.0))
                inv = 1.0 / dS
                schur_precond = spla.LinearOperator((k, k), matvec=lambda r: inv * r)
            vp, spc = velocity_precond, schur_precond

            def apply(r):
                out = np.empty_like(r)
                out[:n] = vp @ r[:n]
                out[n:] = spc @ r[n:]
                return out

            self._P = spla.LinearOperator((n + k, n + k), matvec=apply)
        else:
            raise ValueError(f"unknown saddle method {method!r}")

    def solve(self, f, g, info: SolveInfo | None = None):
        n, k = self.n, self.k
        f = np.asarray(f, dtype=float)
        g = np.asarray(g, dtype=float)
        scale = max(np.linalg.norm(f), np.linalg.norm(g))
        if scale == 0.0:
            return np.zeros(n), np.zeros(k)
        check_compatible(g, self.Qp, max(self.tol, 1e-10), self.label)
        check_compatible(f, self.Qu, max(self.tol, 1e-10), self.label)
        g = project_out(g, self.Qp)
        f = project_out(f, self.Qu)
        rhs = np.concatenate([f, g])
        if self.method == "direct":
            x = self._fac.solve(rhs, tol=self.tol, Q=self.Q, label=self.label, scale=scale)
        else:
            x, _ = _block_minres(self.K0, rhs, self._P, self.tol, self.maxiter, self.Q,
                                 self.label, scale)
        u = project_out(x[:n], self.Qu)
        p = project_out(x[n:], self.Qp)
        ru = np.linalg.norm(self.A @ u + self.B.T @ p - f) / scale
        rp = np.linalg.norm(self.B @ u - g) / scale
        if info is not None:
            info.iterations, info.residual, info.method = 1, float(max(ru, rp)), self.method
        if max(ru, rp) > 10 * self.tol:
            raise SolverError(f"saddle solve residuals {ru:.3e}, {rp:.3e} exceed tolerance",
                              residual=max(ru, rp), label=self.label)
        return u, p


def saddle_solve(A, B, f, g, tol: float = 1e-10, pressure_nullspace=None,
                 velocity_nullspace=None, label=None, info: SolveInfo | None = None,
                 method: str = "auto", velocity_precond=None, schur_precond=None,
                 maxiter: int = 5000):
    """Solve ``[[A, B^T], [B, 0]] (u, p) = (f, g)``; see :class:`SaddleSolver`."""
    if max(np.linalg.norm(f), np.linalg.norm(g)) == 0.0:
        return np.zeros(sp.csr_matrix(A).shape[0]), np.zeros(sp.csr_matrix(B).shape[0])
    solver = SaddleSolver(A, B, tol=tol, pressure_nullspace=pressure_nullspace,
                          velocity_nullspace=velocity_nullspace, label=label, method=method,
                          velocity_precond=velocity_precond, schur_precond=schur_precond,
                          maxiter=maxiter)
    return solver.solve(f, g, info=info)


class SPDSolver:
    """Reusable solver for one SPD (or consistent PSD) matrix.

    Small systems are factorised once; larger ones use CG with a
    smoothed-aggregation AMG preconditioner built once.
    """

    direct_limit = 4000

    def __init__(self, A, nullspace=None, near_null=None, tol=1e-10, method="auto",
                 label=None):
        self.A = sp.csr_matrix(A)
        self.Q = orthonormal_columns(nullspace)
        self.tol = tol
        self.label = label
        n = self.A.shape[0]
        if method == "auto":
            method = "direct" if n <= self.direct_limit else "cg"
        self.method = method
        self.iterations = []
        if n == 0:
            self.method = "empty"
        elif method == "direct":
            shift = 1e-9 * _shift_scale(self.A) if self.Q is not None else 0.0
            self._fac = ShiftedFactor(self.A, shift * sp.identity(n, format="csc"))
        elif method == "cg":
            near = near_null if near_null is not None else nullspace
            self._M = amg_preconditioner(self.A, near)
        else:
            raise ValueError(f"unknown method {method!r}")

    def solve(self, b, x0=None):
        b = np.asarray(b, dtype=float)
        if self.method == "empty":
            return np.zeros(0)
        check_compatible(b, self.Q, max(self.tol, 1e-10), self.label)
        b = project_out(b, self.Q)
        if self.method == "direct":
            x = project_out(self._fac.solve(b, tol=self.tol, Q=self.Q, label=self.label), self.Q)
            self.iterations.append(1)
            return x
        info = SolveInfo()
        x = cg_solve(self.A, b, tol=self.tol, nullspace=self.Q, M=self._M, x0=x0,
                     label=self.label, info=info)
        self.iterations.append(info.iterations)
        return x
