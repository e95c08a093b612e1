"""Compressed sparse column storage and the instrumented sparse kernels.

Conventions used throughout the package:

* ``nnz`` counts *stored* entries. A ``symmetric-lower`` matrix stores only
  entries with ``row >= col``, so its ``nnz`` is the lower-triangle count.
* Products are pattern based: entries that cancel numerically stay in the
  pattern, which keeps every flop charge independent of the values.
"""

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from ._backend import kernels
from .ledger import charge

GENERAL = "general"
SYMMETRIC_LOWER = "symmetric-lower"


class DimensionError(ValueError):
    """Operands do not conform."""


@dataclass(frozen=True, eq=False)
class SparseMat:
    nrows: int
    ncols: int
    col_ptr: np.ndarray
    row_idx: np.ndarray
    values: np.ndarray
    symmetry: str = GENERAL

    def __post_init__(self):
        col_ptr = np.ascontiguousarray(self.col_ptr, dtype=np.int64)
        row_idx = np.ascontiguousarray(self.row_idx, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "col_ptr", col_ptr)
        object.__setattr__(self, "row_idx", row_idx)
        object.__setattr__(self, "values", values)
        if self.symmetry not in (GENERAL, SYMMETRIC_LOWER):
            raise ValueError(f"unknown symmetry tag {self.symmetry!r}")
        if col_ptr.shape != (self.ncols + 1,) or col_ptr[0] != 0:
            raise ValueError("col_ptr must have length ncols+1 and start at 0")
        if np.any(np.diff(col_ptr) < 0):
            raise ValueError("col_ptr must be non-decreasing")
        if col_ptr[-1] != row_idx.size or row_idx.size != values.size:
            raise ValueError("col_ptr[-1], len(row_idx) and len(values) disagree")
        if row_idx.size:
            if row_idx.min() < 0 or row_idx.max() >= self.nrows:
                raise ValueError("row index out of range")
            cols = self.col_indices()
            same_col = cols[1:] == cols[:-1]
            if np.any(row_idx[1:][same_col] <= row_idx[:-1][same_col]):
                raise ValueError("row indices must be strictly increasing within a column")
            if self.symmetry == SYMMETRIC_LOWER and np.any(row_idx < cols):
                raise ValueError("symmetric-lower storage holds only row >= col")
        if self.symmetry == SYMMETRIC_LOWER and self.nrows != self.ncols:
            raise ValueError("symmetric matrices must be square")

    # construction -----------------------------------------------------

    @classmethod
    def from_coo(cls, nrows, ncols, rows, cols, vals, symmetry=GENERAL):
        """Build from triplets; duplicates are summed, explicit zeros kept."""
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if not (rows.size == cols.size == vals.size):
            raise ValueError("triplet arrays differ in length")
        if symmetry == SYMMETRIC_LOWER and np.any(rows < cols):
            raise ValueError("symmetric-lower triplets must satisfy row >= col")
        key = cols * max(nrows, 1) + rows
        order = np.argsort(key, kind="stable")
        key = key[order]
        if key.size:
            first = np.concatenate(([True], key[1:] != key[:-1]))
            starts = np.flatnonzero(first)
            summed = np.add.reduceat(vals[order], starts)
            ukey = key[starts]
        else:
            summed = vals
            ukey = key
        ucol = ukey // max(nrows, 1)
        urow = ukey - ucol * max(nrows, 1)
        col_ptr = np.zeros(ncols + 1, dtype=np.int64)
        np.cumsum(np.bincount(ucol, minlength=ncols), out=col_ptr[1:])
        return cls(nrows, ncols, col_ptr, urow, summed, symmetry)

    @classmethod
    def from_dense(cls, M, symmetry=GENERAL, keep_zeros=False):
        M = np.asarray(M, dtype=np.float64)
        if symmetry == SYMMETRIC_LOWER:
            M = np.tril(M)
        mask = np.ones_like(M, dtype=bool) if keep_zeros else M != 0
        if symmetry == SYMMETRIC_LOWER:
            mask &= np.tri(*M.shape, dtype=bool)
        rows, cols = np.nonzero(mask)
        return cls.from_coo(M.shape[0], M.shape[1], rows, cols, M[rows, cols], symmetry)

    @classmethod
    def from_scipy(cls, S, symmetry=GENERAL):
        S = sp.coo_matrix(S)
        rows, cols, vals = S.row, S.col, S.data
        if symmetry == SYMMETRIC_LOWER:
            keep = rows >= cols
            rows, cols, vals = rows[keep], cols[keep], vals[keep]
        return cls.from_coo(S.shape[0], S.shape[1], rows, cols, vals, symmetry)

    @classmethod
    def identity(cls, n, scale=1.0, symmetry=GENERAL):
        idx = np.arange(n)
        return cls.from_coo(n, n, idx, idx, np.full(n, float(scale)), symmetry)

    @classmethod
    def zeros(cls, nrows, ncols, symmetry=GENERAL):
        return cls(nrows, ncols, np.zeros(ncols + 1, dtype=np.int64), [], [], symmetry)

    # inspection -------------------------------------------------------

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def is_symmetric(self):
        return self.symmetry == SYMMETRIC_LOWER

    def nnz(self):
        return int(self.col_ptr[-1])

    def col_indices(self):
        return np.repeat(np.arange(self.ncols, dtype=np.int64), np.diff(self.col_ptr))

    def coo(self):
        return self.row_idx.copy(), self.col_indices(), self.values.copy()

    def row_counts(self):
        """Stored entries per row."""
        return np.bincount(self.row_idx, minlength=self.nrows)

    def col_counts(self):
        """Stored entries per column."""
        return np.diff(self.col_ptr)

    def diagonal(self):
        rows, cols, vals = self.coo()
        d = np.zeros(min(self.shape))
        on = rows == cols
        d[rows[on]] = vals[on]
        return d

    def to_dense(self):
        """Dense array; symmetric-lower matrices are expanded."""
        M = np.zeros(self.shape)
        rows, cols, vals = self.coo()
        np.add.at(M, (rows, cols), vals)
        if self.is_symmetric:
            off = rows != cols
            np.add.at(M, (cols[off], rows[off]), vals[off])
        return M

    def to_scipy(self):
        """scipy CSC matrix holding the full (expanded) operator."""
        rows, cols, vals = self.coo()
        if self.is_symmetric:
            off = rows != cols
            rows, cols, vals = (
                np.concatenate((rows, cols[off])),
                np.concatenate((cols, rows[off])),
                np.concatenate((vals, vals[off])),
            )
        return sp.csc_matrix((vals, (rows, cols)), shape=self.shape)

    def expand(self):
        """General-storage copy of a symmetric-lower matrix."""
        if not self.is_symmetric:
            return self
        rows, cols, vals = self.coo()
        off = rows != cols
        return SparseMat.from_coo(
            self.nrows, self.ncols,
            np.concatenate((rows, cols[off])),
            np.concatenate((cols, rows[off])),
            np.concatenate((vals, vals[off])),
        )

    def lower(self):
        """Symmetric-lower view of a square matrix (upper entries dropped)."""
        if self.is_symmetric:
            return self
        rows, cols, vals = self.coo()
        keep = rows >= cols
        return SparseMat.from_coo(self.nrows, self.ncols, rows[keep], cols[keep], vals[keep], SYMMETRIC_LOWER)

    def transpose(self):
        if self.is_symmetric:
            return self
        rows, cols, vals = self.coo()
        return SparseMat.from_coo(self.ncols, self.nrows, cols, rows, vals)

    @property
    def T(self):
        return self.transpose()

    def with_values(self, values):
        return SparseMat(self.nrows, self.ncols, self.col_ptr, self.row_idx, values, self.symmetry)

    def pattern_equal(self, other):
        return (
            self.shape == other.shape
            and self.symmetry == other.symmetry
            and np.array_equal(self.col_ptr, other.col_ptr)
            and np.array_equal(self.row_idx, other.row_idx)
        )

    def equal(self, other):
        return self.pattern_equal(other) and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"SparseMat({self.nrows}x{self.ncols}, nnz={self.nnz()}, {self.symmetry})"


@dataclass(frozen=True, eq=False)
class DiagMat:
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("diagonal entries must be finite")
        object.__setattr__(self, "values", v)

    @property
    def dim(self):
        return self.values.size

    def inv(self):
        return DiagMat(1.0 / self.values)

    def __matmul__(self, v):
        return self.values * v


# kernels --------------------------------------------------------------


def spmv(B, v, transpose=False, ledger=None, label=None):
    """``B @ v`` (or ``B.T @ v``); charges ``2 * nnz(B)`` spmv flops."""
    v = np.ascontiguousarray(v, dtype=np.float64)
    expected = B.nrows if transpose else B.ncols
    if v.shape != (expected,):
        raise DimensionError(f"vector of length {v.shape} does not conform to {B!r}")
    if B.is_symmetric:
        out = kernels.spmv_sym_lower(B.col_ptr, B.row_idx, B.values, v)
    else:
        out = kernels.spmv_csc(B.col_ptr, B.row_idx, B.values, v, B.nrows, bool(transpose))
    charge(ledger, "spmv", 2 * B.nnz(), label)
    return out


def _row_major(B):
    """Entries of ``B`` regrouped by row, columns ascending within a row."""
    rows, cols, vals = B.coo()
    order = np.argsort(rows, kind="stable")
    row_ptr = np.zeros(B.nrows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=B.nrows), out=row_ptr[1:])
    return row_ptr, rows[order], cols[order], vals[order]


def spmm_BtDB(B, D1, ledger=None, label=None):
    """``B.T @ diag(D1) @ B`` as a symmetric-lower matrix.

    Accumulated as one outer product per row of ``B``; the charge is
    ``sum_i nz(B[i, :])**2``.
    """
    if B.is_symmetric:
        B = B.expand()
    d = D1.values if isinstance(D1, DiagMat) else np.asarray(D1, dtype=np.float64)
    if d.shape != (B.nrows,):
        raise DimensionError(f"diagonal of length {d.size} does not conform to {B!r}")
    row_ptr, rows, cols, vals = _row_major(B)
    counts = np.diff(row_ptr)
    # pair every entry with the entries of its row at or before it (lower triangle)
    pos = np.arange(rows.size, dtype=np.int64)
    first = row_ptr[rows]
    npart = pos - first + 1
    total = int(npart.sum())
    left = np.repeat(pos, npart)
    offsets = np.repeat(np.cumsum(npart) - npart, npart)
    right = np.repeat(first, npart) + (np.arange(total, dtype=np.int64) - offsets)
    out = SparseMat.from_coo(
        B.ncols, B.ncols, cols[left], cols[right],
        d[rows[left]] * vals[left] * vals[right], SYMMETRIC_LOWER,
    )
    charge(ledger, "spmm", int(np.sum(counts.astype(np.int64) ** 2)), label)
    return out


def spmm_BDBt(B, D2, ledger=None, label=None):
    """``B @ diag(D2) @ B.T`` as a symmetric-lower matrix; charge ``sum_j nz(B[:, j])**2``."""
    if B.is_symmetric:
        B = B.expand()
    return spmm_BtDB(B.transpose(), D2, ledger, label)


def add(A, B, alpha=1.0, beta=1.0):
    """``alpha*A + beta*B`` on the union pattern (uncharged)."""
    if A.shape != B.shape:
        raise DimensionError(f"{A!r} and {B!r} differ in shape")
    if A.symmetry != B.symmetry:
        A, B = A.expand(), B.expand()
    ra, ca, va = A.coo()
    rb, cb, vb = B.coo()
    return SparseMat.from_coo(
        A.nrows, A.ncols,
        np.concatenate((ra, rb)), np.concatenate((ca, cb)),
        np.concatenate((alpha * va, beta * vb)), A.symmetry,
    )


def add_diagonal(A, d):
    """``A + diag(d)``; the full diagonal enters the pattern (uncharged)."""
    n = A.nrows
    d = np.broadcast_to(np.asarray(d, dtype=np.float64), (n,))
    idx = np.arange(n)
    return add(A, SparseMat.from_coo(n, n, idx, idx, d, A.symmetry))


def scale(A, alpha):
    return A.with_values(alpha * A.values)


def sym_block(A11, A21, d22=None):
    """Symmetric-lower ``[[A11, A21.T], [A21, diag(d22)]]``.

    ``A11`` must be symmetric-lower (n x n) and ``A21`` general (m x n).
    With ``d22=None`` the (2,2) block is structurally empty.
    """
    n, m = A11.nrows, A21.nrows
    if A21.ncols != n:
        raise DimensionError("off-diagonal block does not conform")
    r1, c1, v1 = A11.lower().coo()
    r2, c2, v2 = A21.coo()
    rows = [r1, r2 + n]
    cols = [c1, c2]
    vals = [v1, v2]
    if d22 is not None:
        idx = np.arange(n, n + m)
        rows.append(idx)
        cols.append(idx)
        vals.append(np.broadcast_to(np.asarray(d22, dtype=np.float64), (m,)))
    return SparseMat.from_coo(
        n + m, n + m, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), SYMMETRIC_LOWER
    )


def vstack(A, B):
    ra, ca, va = A.expand().coo()
    rb, cb, vb = B.expand().coo()
    return SparseMat.from_coo(
        A.nrows + B.nrows, A.ncols,
        np.concatenate((ra, rb + A.nrows)), np.concatenate((ca, cb)), np.concatenate((va, vb)),
    )


def frob_count(A, ledger=None, label=None):
    """Return ``nnz(A)`` and charge it to the norm counter."""
    n = A.nnz()
    charge(ledger, "norm", n, label)
    return n


def frob_norm(A):
    """Frobenius norm of the expanded operator."""
    if A.is_symmetric:
        rows, cols, vals = A.coo()
        w = np.where(rows == cols, 1.0, 2.0)
        return float(np.sqrt(np.sum(w * vals**2)))
    return float(np.linalg.norm(A.values))


def two_norm_estimate(A, iters=100, seed=0):
    """Power-iteration estimate of the largest singular value of ``A`` (uncharged)."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if A.nnz() == 0 or not np.any(A.values):
        return 0.0
    rng = np.random.Generator(np.random.Philox(seed))
    v = rng.standard_normal(A.ncols)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        # normalize between the two products so huge entries cannot overflow
        u = spmv(A, v)
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return 0.0
        u /= nu
        w = spmv(A, u) if A.is_symmetric else spmv(A, u, transpose=True)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        sigma = np.sqrt(nu) * np.sqrt(nw)
        v = w / nw
    return float(sigma)


# Matrix Market ----------------------------------------------------------


def read_mm(path):
    """Read a coordinate Matrix Market file; symmetric files become symmetric-lower."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", "replace").lower()
    M = scipy.io.mmread(path)
    symmetry = SYMMETRIC_LOWER if "symmetric" in header.split() else GENERAL
    if not sp.issparse(M):
        return SparseMat.from_dense(M, symmetry)
    return SparseMat.from_scipy(M, symmetry)


def write_mm(path, A):
    """Write ``A`` as coordinate Matrix Market (``symmetric`` for symmetric-lower)."""
    rows, cols, vals = A.coo()
    S = sp.coo_matrix((vals, (rows, cols)), shape=A.shape)
    scipy.io.mmwrite(path, S, symmetry="symmetric" if A.is_symmetric else "general")
