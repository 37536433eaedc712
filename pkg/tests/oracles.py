"""Independent dense reference implementations used by the tests.

Everything here is written with explicit index loops over the periodic
grid instead of the sparse operators in ``porohomog.grid``, so agreement
with the production code checks the assembly as well as the solvers.
Only meant for grids of a few hundred cells.
"""

from __future__ import annotations

import itertools

import numpy as np

SHEAR = ((1, 2), (0, 2), (0, 1))
PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))


class DenseMAC:
    """Strain rows of the staggered grid as dense matrices.

    Dof ``a * n + flat(idx)`` is component ``a`` on the face between cell
    ``idx`` and ``idx + e_a``.
    """

    def __init__(self, dims):
        self.dims = tuple(int(d) for d in dims)
        self.n = int(np.prod(self.dims))
        self.vol = 1.0 / self.n
        self.h = [1.0 / d for d in self.dims]
        self.cells = list(itertools.product(*(range(d) for d in self.dims)))

    def flat(self, idx) -> int:
        i, j, k = (int(v) % d for v, d in zip(idx, self.dims))
        return (i * self.dims[1] + j) * self.dims[2] + k

    def dof(self, a, idx) -> int:
        return a * self.n + self.flat(idx)

    @staticmethod
    def step(idx, a, s=1):
        out = list(idx)
        out[a] += s
        return tuple(out)

    def normal_row(self, a, idx) -> np.ndarray:
        r = np.zeros(3 * self.n)
        r[self.dof(a, idx)] += 1.0 / self.h[a]
        r[self.dof(a, self.step(idx, a, -1))] -= 1.0 / self.h[a]
        return r

    def shear_row(self, a, b, idx) -> np.ndarray:
        # (a, b) edge of cell idx, half the sum of the cross differences
        r = np.zeros(3 * self.n)
        r[self.dof(a, self.step(idx, b))] += 0.5 / self.h[b]
        r[self.dof(a, idx)] -= 0.5 / self.h[b]
        r[self.dof(b, self.step(idx, a))] += 0.5 / self.h[a]
        r[self.dof(b, idx)] -= 0.5 / self.h[a]
        return r

    def div_row(self, idx) -> np.ndarray:
        return sum(self.normal_row(a, idx) for a in range(3))

    def value(self, c, idx) -> float:
        return float(c[self.flat(idx)])

    def edge_value(self, c, a, b, idx) -> float:
        ia = self.step(idx, a)
        return 0.25 * (self.value(c, idx) + self.value(c, ia) + self.value(c, self.step(idx, b))
                       + self.value(c, self.step(ia, b)))

    def quadrature(self, c):
        """``(row, weight, (a, b))`` over all strain points with coefficient ``c``."""
        for idx in self.cells:
            for a in range(3):
                yield self.normal_row(a, idx), self.value(c, idx) * self.vol, (a, a)
            for a, b in SHEAR:
                yield self.shear_row(a, b, idx), self.edge_value(c, a, b, idx) * self.vol, (a, b)

    def strain_form(self, c) -> np.ndarray:
        K = np.zeros((3 * self.n, 3 * self.n))
        for r, w, (a, b) in self.quadrature(c):
            K += (1.0 if a == b else 2.0) * w * np.outer(r, r)
        return K

    def div_form(self, c) -> np.ndarray:
        K = np.zeros((3 * self.n, 3 * self.n))
        for idx in self.cells:
            r = self.div_row(idx)
            K += self.value(c, idx) * self.vol * np.outer(r, r)
        return K

    def strain_functional(self, G, c) -> np.ndarray:
        """Vector of ``<c G : D(v)>``."""
        f = np.zeros(3 * self.n)
        for r, w, (a, b) in self.quadrature(c):
            f += w * (G[a, a] if a == b else G[a, b] + G[b, a]) * r
        return f

    def div_functional(self, c) -> np.ndarray:
        f = np.zeros(3 * self.n)
        for idx in self.cells:
            f += self.value(c, idx) * self.vol * self.div_row(idx)
        return f

    def div_matrix(self) -> np.ndarray:
        return np.array([self.div_row(idx) for idx in self.cells])

    def strain_average(self, u, c) -> np.ndarray:
        out = np.zeros((3, 3))
        for r, w, (a, b) in self.quadrature(c):
            out[a, b] += w * float(r @ u)
        out[1, 0], out[2, 0], out[2, 1] = out[0, 1], out[0, 2], out[1, 2]
        return out

    def strains(self, u, c=None) -> np.ndarray:
        """Strain samples of ``u`` at the points where ``c`` carries weight.

        Away from those points the field is not determined by its form.
        """
        c = np.ones(self.n) if c is None else np.asarray(c, dtype=float).ravel()
        return np.array([float(r @ u) for r, w, _ in self.quadrature(c) if w > 0])


def basis(i, j) -> np.ndarray:
    J = np.zeros((3, 3))
    J[i, j] += 0.5
    J[j, i] += 0.5
    return J


def min_norm_solve(A, b) -> np.ndarray:
    return np.linalg.lstsq(A, b, rcond=1e-13)[0]


def elastic_reference(chi, lambda0, eta0):
    """Dense solutions of the elastic cell families on the 3D indicator ``chi``.

    Finite ``eta0`` eliminates the skeleton pressure.  The nonlocal family
    is solved as one bordered system in ``(U, k)`` rather than by combining
    two solves.  Returns ``(mac, U, Pi)`` dictionaries keyed like the
    production solution.
    """
    mac = DenseMAC(np.shape(chi))
    chi = np.asarray(chi, dtype=float).ravel()
    s = 1.0 - chi
    Ksh = mac.strain_form(s)
    Kb = mac.div_form(s)
    D = mac.div_matrix()
    U, Pi = {}, {}
    ratio = eta0 / lambda0
    A = Ksh + ratio * Kb
    for p in PAIRS:
        u = min_norm_solve(A, -mac.strain_functional(basis(*p), s))
        U[p] = u
        Pi[p] = -ratio * s * (D @ u)
    # lambda0 Ksh U + eta0 <s (div U + 1) div V> = 0
    A0 = lambda0 * Ksh + eta0 * Kb
    U["U0"] = min_norm_solve(A0, -eta0 * mac.div_functional(s))
    Pi["U0"] = -eta0 * s * (D @ U["U0"] + 1.0)
    U["U1"] = min_norm_solve(A0, mac.div_functional(chi))
    Pi["U1"] = -eta0 * s * (D @ U["U1"])
    # U2 = solution of A0 U = f1 + k f0 with <s Pi> = m, Pi = -eta0 s (div U + k)
    m = chi.mean()
    nd = 3 * mac.n
    f0 = -eta0 * mac.div_functional(s)
    big = np.zeros((nd + 1, nd + 1))
    big[:nd, :nd] = A0
    big[:nd, nd] = -f0
    big[nd, :nd] = -eta0 * mac.vol * (s @ D)
    big[nd, nd] = -eta0 * mac.vol * s.sum()
    rhs = np.concatenate([mac.div_functional(chi), [m]])
    x = min_norm_solve(big, rhs)
    U["U2"] = x[:nd]
    Pi["U2"] = -eta0 * s * (D @ x[:nd] + x[nd])
    return mac, U, Pi


def incompressible_elastic_reference(chi, lambda0):
    """Pair families with ``s div U = 0`` enforced by a multiplier, dense KKT."""
    mac = DenseMAC(np.shape(chi))
    chi = np.asarray(chi, dtype=float).ravel()
    s = 1.0 - chi
    Ksh = mac.strain_form(s)
    D = mac.div_matrix()
    rows = np.flatnonzero(s > 0)
    B = -mac.vol * D[rows]
    nd, nc = 3 * mac.n, rows.size
    kkt = np.zeros((nd + nc, nd + nc))
    kkt[:nd, :nd] = Ksh
    kkt[:nd, nd:] = B.T
    kkt[nd:, :nd] = B
    U = {}
    for p in PAIRS:
        rhs = np.concatenate([-mac.strain_functional(basis(*p), s), np.zeros(nc)])
        U[p] = min_norm_solve(kkt, rhs)[:nd]
    return mac, U


def visco_initial_reference(chi, mu0, nu0, G):
    """Traction-free pore problem ``mu0 <chi D:D> + nu0 <chi div div> = -<chi G:D>``."""
    mac = DenseMAC(np.shape(chi))
    chi = np.asarray(chi, dtype=float).ravel()
    A = mu0 * mac.strain_form(chi) + nu0 * mac.div_form(chi)
    W = min_norm_solve(A, -mac.strain_functional(G, chi))
    return mac, W
