# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: sparse Cholesky and fractional cycle canceling.

Up-looking factorization of a symmetric positive definite matrix stored as the
upper triangle in CSC form (column k holds rows i <= k). The symbolic pass runs
once per sparsity pattern; the numeric pass reuses it for every new set of
values. Mirrors ``_kernels_py`` line for line.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, round as cround, sqrt

cnp.import_array()

ctypedef cnp.int64_t idx_t


def etree(idx_t[::1] Cp, idx_t[::1] Ci, Py_ssize_t n):
    cdef cnp.ndarray[idx_t, ndim=1] parent_arr = np.full(n, -1, dtype=np.int64)
    cdef cnp.ndarray[idx_t, ndim=1] anc_arr = np.full(n, -1, dtype=np.int64)
    cdef idx_t[::1] parent = parent_arr
    cdef idx_t[::1] ancestor = anc_arr
    cdef Py_ssize_t k, p
    cdef idx_t i, inext
    for k in range(n):
        for p in range(Cp[k], Cp[k + 1]):
            i = Ci[p]
            while i != -1 and i < k:
                inext = ancestor[i]
                ancestor[i] = k
                if inext == -1:
                    parent[i] = k
                i = inext
    return parent_arr


cdef inline Py_ssize_t _ereach(idx_t[::1] Cp, idx_t[::1] Ci, Py_ssize_t k,
                               idx_t[::1] parent, idx_t[::1] stack,
                               idx_t[::1] mark, Py_ssize_t n) nogil:
    # Pattern of row k of L, written to stack[top:n] in topological order.
    cdef Py_ssize_t top = n, p, length
    cdef idx_t i
    mark[k] = k
    for p in range(Cp[k], Cp[k + 1]):
        i = Ci[p]
        if i > k:
            continue
        length = 0
        while mark[i] != k:
            stack[length] = i
            length += 1
            mark[i] = k
            i = parent[i]
        while length > 0:
            top -= 1
            length -= 1
            stack[top] = stack[length]
    return top


def symbolic(idx_t[::1] Cp, idx_t[::1] Ci, idx_t[::1] parent, Py_ssize_t n):
    """Column pointers of L (diagonal included)."""
    cdef cnp.ndarray[idx_t, ndim=1] counts_arr = np.ones(n, dtype=np.int64)
    cdef idx_t[::1] counts = counts_arr
    cdef idx_t[::1] stack = np.empty(n, dtype=np.int64)
    cdef idx_t[::1] mark = np.full(n, -1, dtype=np.int64)
    cdef Py_ssize_t k, top
    for k in range(n):
        top = _ereach(Cp, Ci, k, parent, stack, mark, n)
        while top < n:
            counts[stack[top]] += 1
            top += 1
    Lp = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts_arr, out=Lp[1:])
    return Lp


def numeric(idx_t[::1] Cp, idx_t[::1] Ci, double[::1] Cx, idx_t[::1] parent,
            idx_t[::1] Lp, idx_t[::1] Li, double[::1] Lx):
    """Fill Li/Lx in place. Returns -1 on success, else the failing column."""
    cdef Py_ssize_t n = Lp.shape[0] - 1
    cdef idx_t[::1] stack = np.empty(n, dtype=np.int64)
    cdef idx_t[::1] mark = np.full(n, -1, dtype=np.int64)
    cdef idx_t[::1] nxt = np.empty(n, dtype=np.int64)
    cdef double[::1] x = np.zeros(n, dtype=np.float64)
    cdef Py_ssize_t k, p, top, q
    cdef Py_ssize_t failed = -1
    cdef idx_t i
    cdef double d, lki
    with nogil:
        for k in range(n):
            nxt[k] = Lp[k]
        for k in range(n):
            top = _ereach(Cp, Ci, k, parent, stack, mark, n)
            x[k] = 0.0
            for p in range(Cp[k], Cp[k + 1]):
                if Ci[p] <= k:
                    x[Ci[p]] = Cx[p]
            d = x[k]
            x[k] = 0.0
            while top < n:
                i = stack[top]
                lki = x[i] / Lx[Lp[i]]
                x[i] = 0.0
                for q in range(Lp[i] + 1, nxt[i]):
                    x[Li[q]] -= Lx[q] * lki
                d -= lki * lki
                q = nxt[i]
                nxt[i] += 1
                Li[q] = k
                Lx[q] = lki
                top += 1
            if d <= 0.0:
                failed = k
                break
            q = nxt[k]
            nxt[k] += 1
            Li[q] = k
            Lx[q] = sqrt(d)
    return failed


def solve(idx_t[::1] Lp, idx_t[::1] Li, double[::1] Lx, double[::1] b):
    """Overwrite b with the solution of L L^T x = b."""
    cdef Py_ssize_t n = Lp.shape[0] - 1
    cdef Py_ssize_t j, p
    with nogil:
        for j in range(n):
            b[j] /= Lx[Lp[j]]
            for p in range(Lp[j] + 1, Lp[j + 1]):
                b[Li[p]] -= Lx[p] * b[j]
        for j in range(n - 1, -1, -1):
            for p in range(Lp[j] + 1, Lp[j + 1]):
                b[j] -= Lx[p] * b[Li[p]]
            b[j] /= Lx[Lp[j]]


cdef inline double _snap01(double v, double tol) nogil:
    cdef double r = cround(v)
    if fabs(v - r) <= tol:
        v = r
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


cdef inline bint _frac(double v) nogil:
    return 0.0 < v < 1.0


def cancel_cycles(idx_t[::1] adj_ptr, idx_t[::1] adj_edge, idx_t[::1] end_a,
                  idx_t[::1] end_b, double[::1] x, double tol):
    """Make every entry of x integral by shifting along cycles of fractional edges.

    adj_ptr/adj_edge list the fractional edges at each vertex (CSR). Each
    cycle found by the walk is shifted by its bottleneck with alternating
    signs. A walk that strands (numerically) settles the stranded edge at
    its nearest integer. Returns the number of cycles canceled.
    """
    cdef Py_ssize_t nv = adj_ptr.shape[0] - 1
    cdef idx_t[::1] ptr = np.array(adj_ptr[:nv], dtype=np.int64)
    cdef idx_t[::1] pos = np.full(nv, -1, dtype=np.int64)
    cdef idx_t[::1] verts = np.empty(nv + 1, dtype=np.int64)
    cdef idx_t[::1] edges = np.empty(nv + 1, dtype=np.int64)
    cdef Py_ssize_t v0, nverts, nedges, i, j, k
    cdef idx_t v, e, ee, w, skip, last
    cdef double eps, c
    cdef long cycles = 0
    with nogil:
        for v0 in range(nv):
            verts[0] = v0
            pos[v0] = 0
            nverts = 1
            nedges = 0
            while nverts > 0:
                v = verts[nverts - 1]
                skip = edges[nedges - 1] if nedges > 0 else -1
                while ptr[v] < adj_ptr[v + 1] and not _frac(x[adj_edge[ptr[v]]]):
                    ptr[v] += 1
                e = -1
                for i in range(ptr[v], adj_ptr[v + 1]):
                    ee = adj_edge[i]
                    if ee != skip and _frac(x[ee]):
                        e = ee
                        break
                if e < 0:
                    if nedges == 0:
                        pos[v0] = -1
                        break
                    nedges -= 1
                    last = edges[nedges]
                    x[last] = cround(x[last])
                    nverts -= 1
                    pos[verts[nverts]] = -1
                    continue
                w = end_b[e] if end_a[e] == v else end_a[e]
                if pos[w] >= 0:
                    k = pos[w]
                    edges[nedges] = e
                    eps = 2.0
                    for j in range(k, nedges + 1):
                        c = (1.0 - x[edges[j]]) if (j - k) % 2 == 0 else x[edges[j]]
                        if c < eps:
                            eps = c
                    for j in range(k, nedges + 1):
                        if (j - k) % 2 == 0:
                            x[edges[j]] = _snap01(x[edges[j]] + eps, tol)
                        else:
                            x[edges[j]] = _snap01(x[edges[j]] - eps, tol)
                    for j in range(k + 1, nverts):
                        pos[verts[j]] = -1
                    nverts = k + 1
                    nedges = k
                    cycles += 1
                else:
                    pos[w] = nverts
                    verts[nverts] = w
                    nverts += 1
                    edges[nedges] = e
                    nedges += 1
    return cycles
