"""Sparse symmetric storage, a PCG solver and a dense generalized eigensolver.

Kept deliberately small: meshes stay at desk scale, so a dense reduction
(Cholesky factor of B, then a standard symmetric eigensolve) is reliable and
fast enough for every spectral path in the package.
"""

from __future__ import annotations

import numpy as np


class SolveError(Exception):
    """Iterative or factorization failure; carries the final residual/pivot."""


class SparseSym:
    """Symmetric sparse matrix; stores the lower triangle in CSR form.

    A full-pattern CSR copy is cached for fast matrix-vector products via
    np.add.reduceat.  Instances are immutable after construction.
    """

    def __init__(self, n, rows, cols, vals):
        """Build from COO triplets of the full symmetric matrix.

        Duplicate (i, j) entries are summed; mirrored off-diagonal entries
        must both be present (as element-loop assembly naturally produces).
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite entries in sparse assembly")
        self.n = int(n)
        r, c, v = _coalesce(self.n, rows, cols, vals)
        keep = r >= c
        self.indptr, self.indices, self.data = _to_csr(self.n, r[keep], c[keep], v[keep])
        self._full_indptr, self._full_indices, self._full_data = _to_csr(self.n, r, c, v)
        self._nonempty = np.flatnonzero(np.diff(self._full_indptr) > 0)
        self._starts = self._full_indptr[self._nonempty]

    @property
    def nnz_lower(self) -> int:
        return len(self.data)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        prod = self._full_data * x[self._full_indices] if x.ndim == 1 else \
            self._full_data[:, None] * x[self._full_indices, :]
        out = np.zeros((self.n,) + x.shape[1:], dtype=float)
        if len(self._starts):
            out[self._nonempty] = np.add.reduceat(prod, self._starts, axis=0)
        return out

    __matmul__ = matvec

    def diagonal(self) -> np.ndarray:
        if not hasattr(self, "_diag"):
            d = np.zeros(self.n)
            rows, cols, vals = self._lower_coo()
            on_diag = rows == cols
            d[rows[on_diag]] = vals[on_diag]
            self._diag = d
        return self._diag

    def _lower_coo(self):
        counts = np.diff(self.indptr)
        rows = np.repeat(np.arange(self.n), counts)
        return rows, self.indices, self.data

    def _full_coo(self):
        counts = np.diff(self._full_indptr)
        rows = np.repeat(np.arange(self.n), counts)
        return rows, self._full_indices, self._full_data

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        rows, cols, vals = self._full_coo()
        a[rows, cols] = vals
        return a

    def __add__(self, other: "SparseSym") -> "SparseSym":
        if self.n != other.n:
            raise ValueError("dimension mismatch")
        r1, c1, v1 = self._full_coo()
        r2, c2, v2 = other._full_coo()
        return SparseSym(self.n, np.concatenate([r1, r2]),
                         np.concatenate([c1, c2]), np.concatenate([v1, v2]))

    def scaled(self, s: float) -> "SparseSym":
        r, c, v = self._full_coo()
        return SparseSym(self.n, r, c, s * v)


def _coalesce(n, rows, cols, vals):
    order = np.lexsort((cols, rows))
    r, c, v = rows[order], cols[order], vals[order]
    if len(r) == 0:
        return r, c, v
    key = r * n + c
    first = np.concatenate([[True], key[1:] != key[:-1]])
    starts = np.flatnonzero(first)
    summed = np.add.reduceat(v, starts)
    return r[starts], c[starts], summed


def _to_csr(n, rows, cols, vals):
    order = np.lexsort((cols, rows))
    r, c, v = rows[order], cols[order], vals[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, r + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, c.copy(), v.copy()


def solve_spd(A: SparseSym, b: np.ndarray, tol: float = 1e-10,
              maxiter: int | None = None, x0: np.ndarray | None = None,
              strict: bool = True) -> np.ndarray:
    """Preconditioned conjugate gradients with a Jacobi preconditioner.

    Solves A x = b for SPD A to relative residual tol.  b may be a vector or
    a matrix of right-hand sides (all columns iterated jointly).  Raises
    SolveError with the final residual if the iteration cap is hit, unless
    strict=False (preconditioner-style use), which returns the best iterate.
    """
    b = np.asarray(b, dtype=float)
    single = b.ndim == 1
    B = b[:, None] if single else b
    n, m = B.shape
    if maxiter is None:
        maxiter = max(20 * n, 2000)
    d = A.diagonal()
    if np.any(d <= 0.0):
        raise SolveError("non-positive diagonal entry; matrix is not SPD")
    dinv = 1.0 / d

    bnorm = np.linalg.norm(B, axis=0)
    target = tol * np.where(bnorm > 0.0, bnorm, 1.0)
    X = np.zeros_like(B) if x0 is None else np.array(x0, dtype=float).reshape(n, m).copy()
    R = B - A.matvec(X) if x0 is not None else B.copy()
    Z = dinv[:, None] * R
    P = Z.copy()
    rz = np.einsum("ij,ij->j", R, Z)
    rnorm = np.linalg.norm(R, axis=0)
    for _ in range(maxiter):
        if np.all(rnorm <= target):
            break
        AP = A.matvec(P)
        pap = np.einsum("ij,ij->j", P, AP)
        alpha = np.where(pap > 0.0, rz / np.where(pap > 0.0, pap, 1.0), 0.0)
        X += alpha * P
        R -= alpha * AP
        Z = dinv[:, None] * R
        rz_new = np.einsum("ij,ij->j", R, Z)
        beta = np.where(rz > 0.0, rz_new / np.where(rz > 0.0, rz, 1.0), 0.0)
        P = Z + beta * P
        rz = rz_new
        rnorm = np.linalg.norm(R, axis=0)
    if strict and not np.all(rnorm <= target):
        worst = float(np.max(rnorm / np.where(bnorm > 0.0, bnorm, 1.0)))
        raise SolveError(f"PCG did not converge in {maxiter} iterations; "
                         f"relative residual {worst:.3e}")
    return X[:, 0] if single else X


def _smallest_cholesky_pivot(B: np.ndarray):
    # Unblocked factorization, used only to diagnose an indefinite B.
    n = len(B)
    L = np.zeros_like(B)
    for j in range(n):
        pivot = B[j, j] - L[j, :j] @ L[j, :j]
        if pivot <= 0.0:
            return j, float(pivot)
        L[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            L[j + 1:, j] = (B[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return None


def generalized_eig_sym(A: np.ndarray, B: np.ndarray, k: int | None = None):
    """k smallest eigenpairs of A x = lambda B x for symmetric A, SPD B.

    Reduces with the Cholesky factor of B to a standard symmetric problem,
    solves it densely, and back-transforms.  Eigenvalues come out ascending
    and eigenvectors B-orthonormal with a deterministic sign convention.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = len(A)
    if A.shape != (n, n) or B.shape != (n, n):
        raise ValueError("A and B must be square and of equal size")
    if k is None:
        k = n
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    B0 = B
    # symmetric equilibration: graded boundary masses have a huge dynamic
    # range and Cholesky loses digits without it
    d = np.sqrt(np.abs(np.diag(B)))
    scale = np.where(d > 0.0, 1.0 / d, 1.0)
    A = A * scale[:, None] * scale[None, :]
    B = B * scale[:, None] * scale[None, :]
    try:
        L = np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        where = _smallest_cholesky_pivot(B)
        j, pivot = where if where is not None else (n - 1, float("nan"))
        raise SolveError(f"Cholesky of B failed at pivot {j} (value {pivot:.6e}); "
                         "B is not positive definite") from None
    Linv = np.linalg.inv(L)
    C = Linv @ A @ Linv.T
    C = 0.5 * (C + C.T)
    w, Y = np.linalg.eigh(C)
    V = scale[:, None] * (Linv.T @ Y)
    # tighten B-orthonormality and fix signs for reproducible output
    norms = np.sqrt(np.einsum("ij,ij->j", V, B0 @ V))
    V = V / norms
    lead = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[lead, np.arange(V.shape[1])])
    signs[signs == 0.0] = 1.0
    V = V * signs
    return w[:k].copy(), V[:, :k].copy()
