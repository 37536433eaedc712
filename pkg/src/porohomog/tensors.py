"""Fourth-rank tensors on symmetric 3x3 matrices as 6x6 matrices.

Index order is (11, 22, 33, 23, 13, 12).  Shear indices carry a factor
sqrt(2) (Mandel weighting), so that

* the identity tensor sum_ij J^ij (x) J^ij maps to the 6x6 identity,
* tensors with major symmetry map to symmetric matrices, and
* eigenvalues of the 6x6 matrix are those of the tensor acting on
  symmetric matrices with the Frobenius inner product.

Contraction follows ``A : B = sum_ij A_ij B_ji``; the tensor ``X (x) Y``
maps ``Z`` to ``X (Y : Z)``.
"""

from __future__ import annotations

import numpy as np

VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
VOIGT_LABELS = ("11", "22", "33", "23", "13", "12")
_W = np.array([1.0, 1.0, 1.0, np.sqrt(2.0), np.sqrt(2.0), np.sqrt(2.0)])


class TensorError(ValueError):
    pass


def basis_matrix(i: int, j: int) -> np.ndarray:
    """J^ij = (I^ij + I^ji) / 2 with I^ij the matrix unit."""
    J = np.zeros((3, 3))
    J[i, j] += 0.5
    J[j, i] += 0.5
    return J


def contract(A: np.ndarray, B: np.ndarray) -> float:
    return float(np.einsum("ij,ji->", A, B))


def outer(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Fourth-rank ``X (x) Y`` with ``(X (x) Y) : Z = X (Y : Z)``.

    Stored as ``T[a, b, k, l]`` so that ``(T : Z)_ab = sum_kl T_abkl Z_lk``.
    """
    return np.einsum("ab,lk->abkl", X, Y)


def apply4(T: np.ndarray, Z: np.ndarray) -> np.ndarray:
    return np.einsum("abkl,lk->ab", T, Z)


def identity4() -> np.ndarray:
    T = np.zeros((3, 3, 3, 3))
    for i in range(3):
        for j in range(3):
            J = basis_matrix(i, j)
            T += outer(J, J)
    return T


def voigt_vector(D: np.ndarray) -> np.ndarray:
    return np.array([D[a, b] for a, b in VOIGT_PAIRS]) * _W


def devoigt_vector(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float) / _W
    D = np.zeros((3, 3))
    for k, (a, b) in enumerate(VOIGT_PAIRS):
        D[a, b] = D[b, a] = v[k]
    return D


def voigt(T: np.ndarray) -> np.ndarray:
    """6x6 Mandel matrix of a fourth-rank tensor (minor symmetries assumed)."""
    T = np.asarray(T, dtype=float)
    M = np.empty((6, 6))
    for I, (a, b) in enumerate(VOIGT_PAIRS):
        for J, (k, l) in enumerate(VOIGT_PAIRS):
            # symmetrise the minor indices so round-trips are exact
            t = 0.25 * (T[a, b, k, l] + T[b, a, k, l] + T[a, b, l, k] + T[b, a, l, k])
            M[I, J] = _W[I] * _W[J] * t
    return M


def devoigt(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    T = np.zeros((3, 3, 3, 3))
    for I, (a, b) in enumerate(VOIGT_PAIRS):
        for J, (k, l) in enumerate(VOIGT_PAIRS):
            t = M[I, J] / (_W[I] * _W[J])
            for p, q in {(a, b), (b, a)}:
                for r, s in {(k, l), (l, k)}:
                    T[p, q, r, s] = t
    return T


def from_columns(columns: dict) -> np.ndarray:
    """Tensor ``sum_ij G[ij] (x) J^ij`` from the responses G[(i, j)], i <= j."""
    T = np.zeros((3, 3, 3, 3))
    for i in range(3):
        for j in range(3):
            T += outer(columns[(min(i, j), max(i, j))], basis_matrix(i, j))
    return T


def asymmetry(M: np.ndarray) -> float:
    M = np.asarray(M, dtype=float)
    return float(np.abs(M - M.T).max())


def jacobi_eigenvalues(M: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    A = np.array(M, dtype=float)
    n = A.shape[0]
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(n)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                R = np.eye(n)
                R[p, p] = R[q, q] = c
                R[p, q] = s
                R[q, p] = -s
                A = R.T @ A @ R
    return np.sort(np.diag(A))


def min_eig_sym(M: np.ndarray, tol: float = 1e-10) -> float:
    M = np.asarray(M, dtype=float)
    scale = max(np.abs(M).max(), 1.0)
    if asymmetry(M) > tol * scale:
        raise TensorError(f"matrix is not symmetric (max asymmetry {asymmetry(M):.3e})")
    return float(jacobi_eigenvalues(0.5 * (M + M.T))[0])


def is_spd(M: np.ndarray, tol: float = 1e-12) -> bool:
    return min_eig_sym(M) > tol


def identity6() -> np.ndarray:
    return voigt(identity4())
