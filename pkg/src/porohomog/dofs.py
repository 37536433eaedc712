"""Restriction of grid unknowns to the dofs a bilinear form actually sees."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph


class ActiveDofs:
    """Dofs with a positive diagonal in ``K``, plus the matching sub-blocks.

    ``n_per_component`` is the length of one vector component block (the
    grid size) when the unknowns are face vectors; translation modes are
    built per connected block of the restricted matrix and per component.
    """

    def __init__(self, K, n_per_component: int | None = None, rel_tol: float = 1e-14):
        K = sp.csr_matrix(K)
        d = K.diagonal()
        scale = d.max() if d.size and d.max() > 0 else 1.0
        self.mask = d > rel_tol * scale
        self.index = np.flatnonzero(self.mask)
        self.n_full = K.shape[0]
        self.n_per_component = n_per_component
        self.K = K[self.index][:, self.index].tocsr()

    @property
    def n(self) -> int:
        return int(self.index.size)

    def restrict(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v)[..., self.index]

    def restrict_matrix(self, M) -> sp.csr_matrix:
        M = sp.csr_matrix(M)
        return M[self.index][:, self.index].tocsr()

    def restrict_columns(self, M) -> sp.csr_matrix:
        return sp.csr_matrix(M)[:, self.index]

    def prolong(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n_full)
        out[self.index] = x
        return out

    def blocks(self, K=None):
        """Connected blocks of the restricted matrix graph: (count, labels)."""
        K = self.K if K is None else K
        if K.shape[0] == 0:
            return 0, np.zeros(0, dtype=int)
        return csgraph.connected_components(K, directed=False)

    def translation_modes(self, K=None) -> np.ndarray | None:
        """Columns spanning piecewise-constant vector fields on each block."""
        if self.n == 0:
            return None
        count, labels = self.blocks(K)
        if self.n_per_component is None:
            comp = np.zeros(self.n, dtype=int)
            ncomp = 1
        else:
            comp = self.index // self.n_per_component
            ncomp = 3
        cols = []
        for b in range(count):
            for c in range(ncomp):
                sel = (labels == b) & (comp == c)
                if sel.any():
                    v = np.zeros(self.n)
                    v[sel] = 1.0
                    cols.append(v)
        return np.stack(cols, axis=1) if cols else None

    def normalize_mean(self, x_full: np.ndarray, weights_full: np.ndarray, K=None) -> np.ndarray:
        """Remove the weighted mean of each vector component on each block."""
        x = np.array(x_full, dtype=float)
        if self.n == 0:
            return x
        count, labels = self.blocks(K)
        w = np.asarray(weights_full)[self.index]
        xa = x[self.index]
        comp = (self.index // self.n_per_component if self.n_per_component
                else np.zeros(self.n, dtype=int))
        for b in range(count):
            for c in np.unique(comp):
                sel = (labels == b) & (comp == c)
                ws = w[sel].sum()
                if ws > 0:
                    xa[sel] -= np.dot(w[sel], xa[sel]) / ws
        x[self.index] = xa
        return x
