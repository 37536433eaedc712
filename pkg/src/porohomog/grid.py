"""Periodic MAC grid on the unit cell and its difference operators.

Scalars live at cell centres.  Component ``a`` of a vector field lives on
the face between cell ``idx`` and cell ``idx + e_a``.  Shear strains live
on cell edges: the ``(a, b)`` edge of cell ``idx`` sits at
``idx + e_a/2 + e_b/2``.  Arrays are flattened in C order of
``(nx, ny, nz)``; vector fields stack the three components.

Every operator is returned as a scipy sparse matrix so that energies,
averages and solves all share one set of quadrature weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

SHEAR_PAIRS = ((1, 2), (0, 2), (0, 1))


@dataclass(frozen=True)
class PeriodicGrid:
    dims: tuple[int, int, int]

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError(f"grid dims must be three positive integers, got {self.dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def n(self) -> int:
        return int(np.prod(self.dims))

    @property
    def h(self) -> np.ndarray:
        return 1.0 / np.asarray(self.dims, dtype=float)

    @property
    def volume(self) -> float:
        return 1.0 / self.n

    @cached_property
    def _index(self) -> np.ndarray:
        return np.arange(self.n).reshape(self.dims)

    def shift_index(self, axis: int, step: int) -> np.ndarray:
        """Flat index of ``idx + step * e_axis`` for every cell (periodic)."""
        return np.roll(self._index, -step, axis=axis).ravel()

    def shift(self, values: np.ndarray, axis: int, step: int) -> np.ndarray:
        """``values[idx + step * e_axis]`` for cell-shaped arrays."""
        return np.roll(np.asarray(values).reshape(self.dims), -step, axis=axis).ravel()

    def centres(self, axis: int) -> np.ndarray:
        return (np.arange(self.dims[axis]) + 0.5) * self.h[axis]

    def coordinates(self, offset=(0.5, 0.5, 0.5)) -> np.ndarray:
        """Point coordinates ``(idx + offset) * h`` as an array of shape (n, 3)."""
        axes = [(np.arange(d) + o) * h for d, o, h in zip(self.dims, offset, self.h)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def face_coordinates(self, axis: int) -> np.ndarray:
        off = [0.5, 0.5, 0.5]
        off[axis] = 1.0
        return self.coordinates(off)

    def edge_coordinates(self, a: int, b: int) -> np.ndarray:
        off = [0.5, 0.5, 0.5]
        off[a] = off[b] = 1.0
        return self.coordinates(off)

    # elementary differences on cell-shaped arrays

    def forward_diff(self, axis: int) -> sp.csr_matrix:
        """(f[idx + e] - f[idx]) / h."""
        n = self.n
        rows = np.concatenate([np.arange(n), np.arange(n)])
        cols = np.concatenate([self.shift_index(axis, 1), np.arange(n)])
        hinv = 1.0 / self.h[axis]
        vals = np.concatenate([np.full(n, hinv), np.full(n, -hinv)])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def backward_diff(self, axis: int) -> sp.csr_matrix:
        """(f[idx] - f[idx - e]) / h; the negative transpose of forward_diff."""
        return (-self.forward_diff(axis).T).tocsr()

    def _component_block(self, blocks) -> sp.csr_matrix:
        n = self.n
        full = [b if b is not None else sp.csr_matrix((n, n)) for b in blocks]
        return sp.hstack(full, format="csr")

    @cached_property
    def div(self) -> sp.csr_matrix:
        """Face vector field -> cell scalar."""
        return self._component_block([self.backward_diff(a) for a in range(3)])

    @cached_property
    def grad(self) -> sp.csr_matrix:
        """Cell scalar -> face vector field; equals ``-div.T``."""
        return sp.vstack([self.forward_diff(a) for a in range(3)], format="csr")

    @cached_property
    def normal_strain(self) -> tuple[sp.csr_matrix, ...]:
        """``E[a] u`` is the (a, a) strain at cell centres."""
        out = []
        for a in range(3):
            blocks = [None] * 3
            blocks[a] = self.backward_diff(a)
            out.append(self._component_block(blocks))
        return tuple(out)

    @cached_property
    def shear_strain(self) -> dict[tuple[int, int], sp.csr_matrix]:
        """``S[(a, b)] u`` is the (a, b) strain at the (a, b) edges."""
        out = {}
        for a, b in SHEAR_PAIRS:
            blocks = [None] * 3
            blocks[a] = 0.5 * self.forward_diff(b)
            blocks[b] = 0.5 * self.forward_diff(a)
            out[(a, b)] = self._component_block(blocks)
        return out

    def edge_mean(self, values: np.ndarray, a: int, b: int) -> np.ndarray:
        """Arithmetic mean of the four cells around each (a, b) edge."""
        v = np.asarray(values, dtype=float).reshape(self.dims)
        va = np.roll(v, -1, axis=a)
        return 0.25 * (v + va + np.roll(v, -1, axis=b) + np.roll(va, -1, axis=b)).ravel()

    def face_mean(self, values: np.ndarray, axis: int) -> np.ndarray:
        """Mean of the two cells sharing each face normal to ``axis``."""
        v = np.asarray(values, dtype=float).reshape(self.dims)
        return 0.5 * (v + np.roll(v, -1, axis=axis)).ravel()

    # fields

    def sym_grad(self, u: np.ndarray) -> np.ndarray:
        """Symmetric gradient as an (n, 3, 3) array.

        Normal components are cell-centred.  Shear components are
        interpolated from the edges to the cell centres by averaging the
        four edges around each cell's axis-parallel edge bundle.
        """
        u = np.asarray(u, dtype=float)
        out = np.zeros((self.n, 3, 3))
        for a in range(3):
            out[:, a, a] = self.normal_strain[a] @ u
        for (a, b), S in self.shear_strain.items():
            e = (S @ u).reshape(self.dims)
            eb = np.roll(e, 1, axis=a)
            c = 0.25 * (e + eb + np.roll(e, 1, axis=b) + np.roll(eb, 1, axis=b)).ravel()
            out[:, a, b] = out[:, b, a] = c
        return out

    def edge_strains(self, u: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
        return {k: S @ u for k, S in self.shear_strain.items()}


@dataclass(frozen=True)
class ScalarField:
    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size != self.grid.n:
            raise ValueError(f"scalar field needs {self.grid.n} values, got {v.size}")
        object.__setattr__(self, "values", v)

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True)
class VectorField:
    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size != 3 * self.grid.n:
            raise ValueError(f"vector field needs {3 * self.grid.n} values, got {v.size}")
        object.__setattr__(self, "values", v)

    def component(self, a: int) -> np.ndarray:
        n = self.grid.n
        return self.values[a * n:(a + 1) * n]


def sym_grad(u: VectorField) -> np.ndarray:
    return u.grid.sym_grad(u.values)


def div(u: VectorField) -> ScalarField:
    return ScalarField(u.grid, u.grid.div @ u.values)


def grad(p: ScalarField) -> VectorField:
    return VectorField(p.grid, p.grid.grad @ p.values)


def elastic_form(grid: PeriodicGrid, shear_coef: np.ndarray, bulk_coef: np.ndarray | None = None,
                 ) -> sp.csr_matrix:
    """Matrix of ``<s D(u):D(v)> + <k div u div v>`` with cell coefficients s, k.

    Shear strains are weighted by the edge mean of ``s``.  The matrix is
    assembled in the same quadrature used by :func:`strain_average`, so
    energies and averages agree to round-off.
    """
    vol = grid.volume
    s = np.broadcast_to(np.asarray(shear_coef, dtype=float), (grid.n,))
    K = sp.csr_matrix((3 * grid.n, 3 * grid.n))
    for a in range(3):
        E = grid.normal_strain[a]
        K = K + E.T @ sp.diags(s * vol) @ E
    for (a, b), S in grid.shear_strain.items():
        K = K + S.T @ sp.diags(2.0 * grid.edge_mean(s, a, b) * vol) @ S
    if bulk_coef is not None:
        k = np.broadcast_to(np.asarray(bulk_coef, dtype=float), (grid.n,))
        B = grid.div
        K = K + B.T @ sp.diags(k * vol) @ B
    K = K.tocsr()
    K.sum_duplicates()
    K.eliminate_zeros()
    return K


def strain_load(grid: PeriodicGrid, G: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """Vector of ``<c G : D(v)>`` for a constant symmetric 3x3 matrix G."""
    vol = grid.volume
    c = np.broadcast_to(np.asarray(coef, dtype=float), (grid.n,))
    out = np.zeros(3 * grid.n)
    for a in range(3):
        if G[a, a] != 0.0:
            out += G[a, a] * (grid.normal_strain[a].T @ (c * vol))
    for (a, b), S in grid.shear_strain.items():
        g = G[a, b] + G[b, a]
        if g != 0.0:
            out += g * (S.T @ (grid.edge_mean(c, a, b) * vol))
    return out


def divergence_load(grid: PeriodicGrid, coef: np.ndarray) -> np.ndarray:
    """Vector of ``<c div v>``."""
    c = np.broadcast_to(np.asarray(coef, dtype=float), (grid.n,))
    return grid.div.T @ (c * grid.volume)


def strain_average(grid: PeriodicGrid, u: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """``<c D(u)>`` as a symmetric 3x3 matrix, in the energy quadrature."""
    vol = grid.volume
    c = np.broadcast_to(np.asarray(coef, dtype=float), (grid.n,))
    out = np.zeros((3, 3))
    for a in range(3):
        out[a, a] = np.dot(c * vol, grid.normal_strain[a] @ u)
    for (a, b), S in grid.shear_strain.items():
        out[a, b] = out[b, a] = np.dot(grid.edge_mean(c, a, b) * vol, S @ u)
    return out


def strain_product(grid: PeriodicGrid, u: np.ndarray, v: np.ndarray, coef: np.ndarray) -> float:
    """``<c D(u):D(v)>`` in the energy quadrature."""
    vol = grid.volume
    c = np.broadcast_to(np.asarray(coef, dtype=float), (grid.n,))
    total = 0.0
    for a in range(3):
        E = grid.normal_strain[a]
        total += np.dot(c * vol, (E @ u) * (E @ v))
    for (a, b), S in grid.shear_strain.items():
        total += 2.0 * np.dot(grid.edge_mean(c, a, b) * vol, (S @ u) * (S @ v))
    return float(total)
