# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sparse kernels; signatures mirror ``sfipm._fallback``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

NAME = "cython"

ctypedef cnp.int64_t idx_t


def spmv_csc(idx_t[::1] col_ptr, idx_t[::1] row_idx, double[::1] values,
             double[::1] x, Py_ssize_t nrows, bint transpose):
    cdef Py_ssize_t ncols = col_ptr.shape[0] - 1
    cdef Py_ssize_t j, p
    cdef double acc, xj
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out
    cdef double[::1] y
    if transpose:
        out = np.zeros(ncols, dtype=np.float64)
        y = out
        for j in range(ncols):
            acc = 0.0
            for p in range(col_ptr[j], col_ptr[j + 1]):
                acc += values[p] * x[row_idx[p]]
            y[j] = acc
    else:
        out = np.zeros(nrows, dtype=np.float64)
        y = out
        for j in range(ncols):
            xj = x[j]
            for p in range(col_ptr[j], col_ptr[j + 1]):
                y[row_idx[p]] += values[p] * xj
    return out


def spmv_sym_lower(idx_t[::1] col_ptr, idx_t[::1] row_idx, double[::1] values,
                   double[::1] x):
    cdef Py_ssize_t n = col_ptr.shape[0] - 1
    cdef Py_ssize_t j, p, i
    cdef double xj, acc, v
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n, dtype=np.float64)
    cdef double[::1] y = out
    for j in range(n):
        xj = x[j]
        acc = 0.0
        for p in range(col_ptr[j], col_ptr[j + 1]):
            i = row_idx[p]
            v = values[p]
            y[i] += v * xj
            if i != j:
                acc += v * x[i]
        y[j] += acc
    return out


def etree_upper(Py_ssize_t n, idx_t[::1] Ap, idx_t[::1] Ai):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] parent_a = np.full(n, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] lnz_a = np.zeros(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] work_a = np.full(n, -1, dtype=np.int64)
    cdef idx_t[::1] parent = parent_a
    cdef idx_t[::1] lnz = lnz_a
    cdef idx_t[::1] work = work_a
    cdef Py_ssize_t j, p
    cdef idx_t i
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
    return parent_a, lnz_a


def ldl_numeric(Py_ssize_t n, idx_t[::1] Ap, idx_t[::1] Ai, double[::1] Ax,
                idx_t[::1] parent, idx_t[::1] lnz, double pivot_tol):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] Lp_a = np.zeros(n + 1, dtype=np.int64)
    cdef Py_ssize_t k, p, q, top, nstack, c, start, stop
    cdef idx_t i
    for k in range(n):
        Lp_a[k + 1] = Lp_a[k] + lnz[k]
    cdef idx_t[::1] Lp = Lp_a
    cdef Py_ssize_t nnz = Lp[n]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] Li_a = np.zeros(nnz, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] Lx_a = np.zeros(nnz, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] D_a = np.zeros(n, dtype=np.float64)
    cdef idx_t[::1] Li = Li_a
    cdef double[::1] Lx = Lx_a
    cdef double[::1] D = D_a
    cdef double[::1] Dinv = np.zeros(n, dtype=np.float64)
    cdef double[::1] y = np.zeros(n, dtype=np.float64)
    cdef idx_t[::1] marked = np.zeros(n, dtype=np.int64)
    cdef idx_t[::1] nxt = np.zeros(n, dtype=np.int64)
    cdef idx_t[::1] pattern = np.zeros(n, dtype=np.int64)
    cdef idx_t[::1] stack = np.zeros(n, dtype=np.int64)
    cdef double dk, yc, lkc
    cdef Py_ssize_t bad = -1
    for k in range(n):
        nxt[k] = Lp[k]
    for k in range(n):
        top = 0
        for p in range(Ap[k], Ap[k + 1]):
            i = Ai[p]
            if i == k:
                D[k] += Ax[p]
                continue
            y[i] += Ax[p]
            if marked[i]:
                continue
            nstack = 0
            while i != -1 and i < k and not marked[i]:
                marked[i] = 1
                stack[nstack] = i
                nstack += 1
                i = parent[i]
            while nstack > 0:
                nstack -= 1
                pattern[top] = stack[nstack]
                top += 1
        dk = D[k]
        while top > 0:
            top -= 1
            c = pattern[top]
            yc = y[c]
            start = Lp[c]
            stop = nxt[c]
            for q in range(start, stop):
                y[Li[q]] -= Lx[q] * yc
            Li[stop] = k
            lkc = yc * Dinv[c]
            Lx[stop] = lkc
            dk -= yc * lkc
            nxt[c] = stop + 1
            y[c] = 0.0
            marked[c] = 0
        D[k] = dk
        if fabs(dk) <= pivot_tol:
            if bad < 0:
                bad = k
            Dinv[k] = 0.0
        else:
            Dinv[k] = 1.0 / dk
    return Lp_a, Li_a, Lx_a, D_a, bad


def lsolve_unit(idx_t[::1] Lp, idx_t[::1] Li, double[::1] Lx, double[::1] x):
    cdef Py_ssize_t n = Lp.shape[0] - 1
    cdef Py_ssize_t j, p
    cdef double xj
    for j in range(n):
        xj = x[j]
        if xj != 0.0:
            for p in range(Lp[j], Lp[j + 1]):
                x[Li[p]] -= Lx[p] * xj
    return np.asarray(x)


def ltsolve_unit(idx_t[::1] Lp, idx_t[::1] Li, double[::1] Lx, double[::1] x):
    cdef Py_ssize_t n = Lp.shape[0] - 1
    cdef Py_ssize_t j, p
    cdef double acc
    for j in range(n - 1, -1, -1):
        acc = x[j]
        for p in range(Lp[j], Lp[j + 1]):
            acc -= Lx[p] * x[Li[p]]
        x[j] = acc
    return np.asarray(x)
