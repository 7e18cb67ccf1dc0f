"""Pure-Python twin of the compiled kernels in ``_kernels.pyx``.

Same signatures, same algorithm. Used when the extension is not built and as
the reference side of the parity tests and the kernel benchmark.
"""

from __future__ import annotations

import math

import numpy as np


def etree(Cp, Ci, n):
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = [-1] * n
    for k in range(n):
        for p in range(Cp[k], Cp[k + 1]):
            i = int(Ci[p])
            while i != -1 and i < k:
                inext = ancestor[i]
                ancestor[i] = k
                if inext == -1:
                    parent[i] = k
                i = inext
    return parent


def _ereach(Cp, Ci, k, parent, mark):
    out = []
    mark[k] = k
    for p in range(Cp[k], Cp[k + 1]):
        i = int(Ci[p])
        if i > k:
            continue
        path = []
        while mark[i] != k:
            path.append(i)
            mark[i] = k
            i = int(parent[i])
        out = path + out
    return out


def symbolic(Cp, Ci, parent, n):
    counts = np.ones(n, dtype=np.int64)
    mark = [-1] * n
    for k in range(n):
        for i in _ereach(Cp, Ci, k, parent, mark):
            counts[i] += 1
    Lp = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=Lp[1:])
    return Lp


def numeric(Cp, Ci, Cx, parent, Lp, Li, Lx):
    n = len(Lp) - 1
    mark = [-1] * n
    nxt = [int(Lp[k]) for k in range(n)]
    x = [0.0] * n
    for k in range(n):
        pattern = _ereach(Cp, Ci, k, parent, mark)
        x[k] = 0.0
        for p in range(Cp[k], Cp[k + 1]):
            if Ci[p] <= k:
                x[int(Ci[p])] = float(Cx[p])
        d = x[k]
        x[k] = 0.0
        for i in pattern:
            lki = x[i] / Lx[Lp[i]]
            x[i] = 0.0
            for q in range(Lp[i] + 1, nxt[i]):
                x[Li[q]] -= Lx[q] * lki
            d -= lki * lki
            q = nxt[i]
            nxt[i] += 1
            Li[q] = k
            Lx[q] = lki
        if d <= 0.0:
            return k
        q = nxt[k]
        nxt[k] += 1
        Li[q] = k
        Lx[q] = math.sqrt(d)
    return -1


def solve(Lp, Li, Lx, b):
    n = len(Lp) - 1
    for j in range(n):
        b[j] /= Lx[Lp[j]]
        for p in range(Lp[j] + 1, Lp[j + 1]):
            b[Li[p]] -= Lx[p] * b[j]
    for j in range(n - 1, -1, -1):
        for p in range(Lp[j] + 1, Lp[j + 1]):
            b[j] -= Lx[p] * b[Li[p]]
        b[j] /= Lx[Lp[j]]


def _half_up(v):
    # C round() on nonnegative input: halves go up, unlike Python's round
    return float(math.floor(v + 0.5))


def _snap01(v, tol):
    r = _half_up(v)
    if abs(v - r) <= tol:
        v = r
    return min(max(v, 0.0), 1.0)


def cancel_cycles(adj_ptr, adj_edge, end_a, end_b, x, tol):
    nv = len(adj_ptr) - 1
    ptr = [int(p) for p in adj_ptr[:nv]]
    hi = [int(p) for p in adj_ptr[1:]]
    adj = [int(e) for e in adj_edge]
    ea = [int(v) for v in end_a]
    eb = [int(v) for v in end_b]
    xs = [float(v) for v in x]
    pos = [-1] * nv
    cycles = 0
    for v0 in range(nv):
        verts = [v0]
        edges = []
        pos[v0] = 0
        while verts:
            v = verts[-1]
            skip = edges[-1] if edges else -1
            while ptr[v] < hi[v] and not 0.0 < xs[adj[ptr[v]]] < 1.0:
                ptr[v] += 1
            e = -1
            for i in range(ptr[v], hi[v]):
                ee = adj[i]
                if ee != skip and 0.0 < xs[ee] < 1.0:
                    e = ee
                    break
            if e < 0:
                if not edges:
                    pos[v0] = -1
                    break
                last = edges.pop()
                xs[last] = _half_up(xs[last])
                pos[verts.pop()] = -1
                continue
            w = eb[e] if ea[e] == v else ea[e]
            if pos[w] >= 0:
                k = pos[w]
                cyc = edges[k:] + [e]
                eps = min((1.0 - xs[c]) if j % 2 == 0 else xs[c] for j, c in enumerate(cyc))
                for j, c in enumerate(cyc):
                    xs[c] = _snap01(xs[c] + eps if j % 2 == 0 else xs[c] - eps, tol)
                for u in verts[k + 1:]:
                    pos[u] = -1
                del verts[k + 1:]
                del edges[k:]
                cycles += 1
            else:
                pos[w] = len(verts)
                verts.append(w)
                edges.append(e)
    x[:] = xs
    return cycles
