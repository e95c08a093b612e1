"""Symmetric factorizations, triangular solves and symbolic fill analysis.

Two backends factor symmetric matrices:

``sparse``
    Pivot-free up-looking LDL^T on the symbolic pattern (compiled kernel when
    available). Safe for SPD and quasi-definite matrices such as
    ``[[-H, A^T], [A, 0]]`` in natural order; a static shift ``reg`` makes
    other orderings safe.
``dense-bk``
    Bunch-Kaufman pivoted LDL^T (LAPACK ``sytrf`` via scipy), used as the
    correctness oracle.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import reverse_cuthill_mckee

from ._backend import kernels
from .ledger import charge
from .sparse import GENERAL, SYMMETRIC_LOWER, DimensionError, SparseMat, add_diagonal

PIVOT_RTOL = 1e-14


class FactorizationError(ArithmeticError):
    def __init__(self, index, message=None):
        self.index = int(index)
        super().__init__(message or f"pivot {self.index} is zero to working precision")


class NotPositiveDefinite(FactorizationError):
    def __init__(self, index):
        super().__init__(index, f"non-positive pivot at index {int(index)}")


@dataclass(frozen=True)
class SymbolicInfo:
    col_counts_L: np.ndarray
    nnz_L: int
    etree: np.ndarray

    @property
    def fact_cost(self):
        return int(np.sum(self.col_counts_L.astype(np.int64) ** 2))

    @property
    def trsv_cost(self):
        return 2 * self.nnz_L

    def to_dict(self):
        return {
            "col_counts_L": self.col_counts_L.tolist(),
            "nnz_L": self.nnz_L,
            "etree": self.etree.tolist(),
            "c_fact": self.fact_cost,
            "c_trsv": self.trsv_cost,
        }


@dataclass(frozen=True, eq=False)
class FactorHandle:
    """``P A P^T = L D L^T`` with unit lower ``L`` and block-diagonal ``D``.

    ``L`` holds only the strictly lower part. ``D`` is stored as its diagonal
    ``d_diag`` and sub-diagonal ``d_sub`` (non-zero only inside 2x2 blocks).
    ``perm[i]`` is the original index placed at position ``i``.
    """

    perm: np.ndarray
    L: SparseMat
    d_diag: np.ndarray
    d_sub: np.ndarray
    kind: str
    backend: str
    source_dim: int
    label: str | None = None

    @property
    def nnz_L(self):
        """Entries of L counting its unit diagonal."""
        return self.L.nnz() + self.source_dim

    @property
    def col_counts(self):
        return self.L.col_counts() + 1

    @property
    def fact_cost(self):
        return int(np.sum(self.col_counts.astype(np.int64) ** 2))

    @property
    def trsv_cost(self):
        return 2 * self.nnz_L

    @property
    def inertia(self):
        """(positive, negative, zero) eigenvalue counts of the factored matrix."""
        eig = _block_eigs(self.d_diag, self.d_sub)
        scale = max(1.0, float(np.max(np.abs(eig)))) if eig.size else 1.0
        zero = np.abs(eig) <= PIVOT_RTOL * scale
        return int(np.sum((eig > 0) & ~zero)), int(np.sum((eig < 0) & ~zero)), int(np.sum(zero))

    def blocks(self):
        """Pivot blocks as a list of 1x1 or 2x2 arrays."""
        out = []
        i, n = 0, self.source_dim
        while i < n:
            if i + 1 < n and self.d_sub[i] != 0.0:
                out.append(np.array([[self.d_diag[i], self.d_sub[i]], [self.d_sub[i], self.d_diag[i + 1]]]))
                i += 2
            else:
                out.append(np.array([[self.d_diag[i]]]))
                i += 1
        return out

    def reconstruct(self):
        """Dense ``P^T L D L^T P`` (for tests)."""
        n = self.source_dim
        L = self.L.to_dense() + np.eye(n)
        D = np.diag(self.d_diag) + np.diag(self.d_sub[:-1], -1) + np.diag(self.d_sub[:-1], 1) if n else np.zeros((0, 0))
        M = L @ D @ L.T
        out = np.empty_like(M)
        out[np.ix_(self.perm, self.perm)] = M
        return out


def _block_eigs(d_diag, d_sub):
    eigs = []
    i, n = 0, d_diag.size
    while i < n:
        if i + 1 < n and d_sub[i] != 0.0:
            eigs.extend(np.linalg.eigvalsh(np.array([[d_diag[i], d_sub[i]], [d_sub[i], d_diag[i + 1]]])))
            i += 2
        else:
            eigs.append(d_diag[i])
            i += 1
    return np.asarray(eigs, dtype=np.float64)


def _check_square_symmetric(A):
    if A.nrows != A.ncols:
        raise DimensionError("factorization needs a square matrix")
    return A.lower() if not A.is_symmetric else A


def _permute_lower(A, perm):
    """Lower triangle of ``A[perm][:, perm]`` from lower storage."""
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    rows, cols, vals = A.coo()
    r, c = inv[rows], inv[cols]
    lo, hi = np.maximum(r, c), np.minimum(r, c)
    return SparseMat.from_coo(A.nrows, A.ncols, lo, hi, vals, SYMMETRIC_LOWER)


def _upper_csc(A):
    """Upper-triangular CSC arrays of a symmetric-lower matrix (its transpose)."""
    rows, cols, vals = A.coo()
    U = SparseMat.from_coo(A.nrows, A.ncols, cols, rows, vals)
    return U.col_ptr, U.row_idx, U.values


def _ordering(A, ordering):
    n = A.nrows
    if ordering == "natural":
        return np.arange(n, dtype=np.int64)
    if ordering == "rcm":
        return np.asarray(reverse_cuthill_mckee(A.to_scipy().tocsr(), symmetric_mode=True), dtype=np.int64)
    raise ValueError(f"unknown ordering {ordering!r}")


def symbolic_cholesky(pattern):
    """Elimination tree and column counts of the Cholesky factor of ``pattern``.

    Values are ignored; the diagonal is always counted.
    """
    A = _check_square_symmetric(pattern)
    Ap, Ai, _ = _upper_csc(A)
    parent, lnz = kernels.etree_upper(A.nrows, Ap, Ai)
    counts = np.asarray(lnz, dtype=np.int64) + 1
    return SymbolicInfo(counts, int(counts.sum()), np.asarray(parent, dtype=np.int64))


def _sparse_ldl(A, perm, label, ledger):
    n = A.nrows
    P = A if np.array_equal(perm, np.arange(n)) else _permute_lower(A, perm)
    Ap, Ai, Ax = _upper_csc(P)
    parent, lnz = kernels.etree_upper(n, Ap, Ai)
    Lp, Li, Lx, D, bad = kernels.ldl_numeric(n, Ap, Ai, Ax, parent, lnz, 0.0)
    D = np.asarray(D)
    L = SparseMat(n, n, Lp, Li, Lx, GENERAL)
    handle = FactorHandle(np.asarray(perm, dtype=np.int64), L, D, np.zeros(n), "ldlt", "sparse", n, label)
    # A pivot is unusable when it is negligible next to the largest entry of its own column.
    tiny = np.flatnonzero(np.abs(D) <= PIVOT_RTOL * _column_max(P))
    if tiny.size and (bad < 0 or tiny[0] < bad):
        bad = tiny[0]
    return handle, int(bad)


def _column_max(A):
    """Largest magnitude in each row/column of a symmetric-lower matrix."""
    rows, cols, vals = A.coo()
    out = np.zeros(A.nrows)
    np.maximum.at(out, rows, np.abs(vals))
    np.maximum.at(out, cols, np.abs(vals))
    return out


def ldlt_factor(A, backend="sparse", reg=0.0, split=None, ordering="natural", ledger=None, label=None):
    """Factor a symmetric (possibly indefinite) matrix.

    Args:
        A: symmetric matrix (symmetric-lower storage preferred).
        backend: ``"sparse"`` or ``"dense-bk"``.
        reg: static shift for the sparse backend; ``-reg`` is added to the
            first ``split`` diagonal positions and ``+reg`` to the rest.
        split: size of the (1,1) block for ``reg``.
        ordering: ``"natural"`` or ``"rcm"`` (sparse backend only).
        ledger: charged ``sum_j nz(L[:, j])**2`` fact flops and one event.
        label: name of the factored matrix in the ledger.
    """
    A = _check_square_symmetric(A)
    n = A.nrows
    if backend == "sparse":
        if reg:
            if split is None:
                raise ValueError("reg needs the (1,1) block size via split")
            A = add_diagonal(A, np.where(np.arange(n) < split, -reg, reg))
        perm = _ordering(A, ordering)
        handle, bad = _sparse_ldl(A, perm, label, ledger)
        if bad >= 0:
            raise FactorizationError(perm[bad])
        cost = handle.fact_cost
    elif backend == "dense-bk":
        handle = _dense_bk(A, label)
        cost = symbolic_cholesky(A).fact_cost
    else:
        raise ValueError(f"unknown backend {backend!r}")
    charge(ledger, "fact", cost, label)
    if ledger is not None:
        ledger.factorized(label)
    return handle


def _dense_bk(A, label):
    n = A.nrows
    M = A.to_dense()
    if n == 0:
        return FactorHandle(np.zeros(0, dtype=np.int64), SparseMat.zeros(0, 0), np.zeros(0), np.zeros(0), "ldlt", "dense-bk", 0, label)
    lu, d, perm = scipy.linalg.ldl(M, lower=True, hermitian=True)
    Lt = lu[perm]
    d_diag = np.diag(d).copy()
    d_sub = np.zeros(n)
    d_sub[:-1] = np.diag(d, -1)
    eig = _block_eigs(d_diag, d_sub)
    scale = float(np.max(np.abs(M)))
    small = np.flatnonzero(np.abs(eig) < PIVOT_RTOL * scale)
    if small.size:
        raise FactorizationError(perm[small[0]])
    L = SparseMat.from_dense(np.tril(Lt, -1))
    return FactorHandle(np.asarray(perm, dtype=np.int64), L, d_diag, d_sub, "ldlt", "dense-bk", n, label)


def cholesky_factor(A, ledger=None, label=None):
    """Factor an SPD matrix as ``L D L^T`` with positive 1x1 pivots.

    Raises:
        NotPositiveDefinite: at the first pivot that is not safely positive.
    """
    A = _check_square_symmetric(A)
    n = A.nrows
    handle, bad = _sparse_ldl(A, np.arange(n, dtype=np.int64), label, ledger)
    nonpos = np.flatnonzero(handle.d_diag <= 0.0)
    failed = [i for i in (bad, nonpos[0] if nonpos.size else -1) if i >= 0]
    if failed:
        raise NotPositiveDefinite(min(failed))
    handle = FactorHandle(handle.perm, handle.L, handle.d_diag, handle.d_sub, "cholesky", "sparse", n, label)
    charge(ledger, "fact", handle.fact_cost, label)
    if ledger is not None:
        ledger.factorized(label)
    return handle


def _block_solve(d_diag, d_sub, y):
    x = y / np.where(d_diag == 0.0, 1.0, d_diag)
    two = np.flatnonzero(d_sub != 0.0)
    if two.size:
        a, b, c = d_diag[two], d_sub[two], d_diag[two + 1]
        det = a * c - b * b
        y1, y2 = y[two], y[two + 1]
        x[two] = (c * y1 - b * y2) / det
        x[two + 1] = (a * y2 - b * y1) / det
    return x


def solve(f, b, ledger=None, label=None):
    """Solve ``A x = b`` with a factor handle.

    Charges two triangular sweeps, ``2 * c_trsv(L)``; the pivot blocks are free.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (f.source_dim,):
        raise DimensionError(f"rhs of shape {b.shape} for a factor of dimension {f.source_dim}")
    L = f.L
    y = np.ascontiguousarray(b[f.perm])
    kernels.lsolve_unit(L.col_ptr, L.row_idx, L.values, y)
    z = np.ascontiguousarray(_block_solve(f.d_diag, f.d_sub, y))
    kernels.ltsolve_unit(L.col_ptr, L.row_idx, L.values, z)
    x = np.empty_like(z)
    x[f.perm] = z
    charge(ledger, "trsv", 2 * f.trsv_cost, label if label is not None else f.label)
    return x
