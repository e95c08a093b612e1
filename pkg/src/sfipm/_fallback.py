"""Pure-Python implementations of the hot sparse kernels.

Every function here has a twin with an identical signature in the compiled
``_kernels`` extension. Index arrays are ``int64``, value arrays ``float64``.
"""

import numpy as np

NAME = "python"


def spmv_csc(col_ptr, row_idx, values, x, nrows, transpose):
    """Return ``B @ x`` (or ``B.T @ x``) for a general CSC matrix."""
    ncols = col_ptr.shape[0] - 1
    cols = np.repeat(np.arange(ncols), np.diff(col_ptr))
    if transpose:
        return np.bincount(cols, weights=values * x[row_idx], minlength=ncols).astype(np.float64)
    return np.bincount(row_idx, weights=values * x[cols], minlength=nrows).astype(np.float64)


def spmv_sym_lower(col_ptr, row_idx, values, x):
    """Return ``A @ x`` where only the lower triangle of symmetric ``A`` is stored."""
    n = col_ptr.shape[0] - 1
    cols = np.repeat(np.arange(n), np.diff(col_ptr))
    y = np.bincount(row_idx, weights=values * x[cols], minlength=n)
    off = row_idx != cols
    y += np.bincount(cols[off], weights=values[off] * x[row_idx[off]], minlength=n)
    return y.astype(np.float64)


def etree_upper(n, Ap, Ai):
    """Elimination tree and strict column counts of L for an upper-triangular CSC pattern.

    Returns ``(parent, lnz)`` where ``lnz[j]`` counts the strictly-lower
    entries of column ``j`` of the Cholesky/LDL factor.
    """
    parent = np.full(n, -1, dtype=np.int64)
    lnz = np.zeros(n, dtype=np.int64)
    work = np.full(n, -1, dtype=np.int64)
    for j in range(n):
        work[j] = j
        for p in range(Ap[j], Ap[j + 1]):
            i = Ai[p]
            if i > j:
                raise ValueError("pattern is not upper triangular")
            while work[i] != j:
                if parent[i] == -1:
                    parent[i] = j
                lnz[i] += 1
                work[i] = j
                i = parent[i]
    return parent, lnz


def ldl_numeric(n, Ap, Ai, Ax, parent, lnz, pivot_tol):
    """Up-looking LDL^T of an upper-triangular CSC matrix without pivoting.

    Returns ``(Lp, Li, Lx, D, bad)``; ``bad`` is the first pivot index with
    ``|D[k]| <= pivot_tol`` or -1. Every structurally reachable entry is stored,
    so the realized pattern equals the symbolic one.
    """
    Lp = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(lnz, out=Lp[1:])
    nnz = int(Lp[n])
    Li = np.zeros(nnz, dtype=np.int64)
    Lx = np.zeros(nnz, dtype=np.float64)
    D = np.zeros(n, dtype=np.float64)
    Dinv = np.zeros(n, dtype=np.float64)
    y = np.zeros(n, dtype=np.float64)
    marked = np.zeros(n, dtype=bool)
    nxt = Lp[:n].copy()
    Lp_l = Lp.tolist()
    parent_l = parent.tolist()
    bad = -1
    for k in range(n):
        pattern = []
        for p in range(Ap[k], Ap[k + 1]):
            i = int(Ai[p])
            if i == k:
                D[k] += Ax[p]
                continue
            y[i] += Ax[p]
            if marked[i]:
                continue
            stack = []
            while i != -1 and i < k and not marked[i]:
                marked[i] = True
                stack.append(i)
                i = parent_l[i]
            pattern.extend(reversed(stack))
        dk = D[k]
        for c in reversed(pattern):
            yc = y[c]
            start, stop = Lp_l[c], nxt[c]
            if stop > start:
                y[Li[start:stop]] -= Lx[start:stop] * yc
            Li[stop] = k
            lkc = yc * Dinv[c]
            Lx[stop] = lkc
            dk -= yc * lkc
            nxt[c] = stop + 1
            y[c] = 0.0
            marked[c] = False
        D[k] = dk
        if abs(dk) <= pivot_tol:
            if bad < 0:
                bad = k
            Dinv[k] = 0.0
        else:
            Dinv[k] = 1.0 / dk
    return Lp, Li, Lx, D, bad


def lsolve_unit(Lp, Li, Lx, x):
    """In place ``x <- L^{-1} x`` for unit lower-triangular CSC ``L`` (diagonal implicit)."""
    n = Lp.shape[0] - 1
    for j in range(n):
        start, stop = Lp[j], Lp[j + 1]
        if stop > start:
            x[Li[start:stop]] -= Lx[start:stop] * x[j]
    return x


def ltsolve_unit(Lp, Li, Lx, x):
    """In place ``x <- L^{-T} x`` for unit lower-triangular CSC ``L``."""
    n = Lp.shape[0] - 1
    for j in range(n - 1, -1, -1):
        start, stop = Lp[j], Lp[j + 1]
        if stop > start:
            x[j] -= np.dot(Lx[start:stop], x[Li[start:stop]])
    return x
