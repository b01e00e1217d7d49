"""Smith normal form of integer matrices with unimodular transforms."""

from __future__ import annotations

import numpy as np


def smith_normal_form(a):
    """Return (D, U, V) with U @ A @ V = D, U and V unimodular.

    D is diagonal with nonnegative entries d_1 | d_2 | ...; works on Python
    integers so there is no overflow.
    """
    a = [[int(v) for v in row] for row in np.asarray(a, dtype=object)]
    m = len(a)
    n = len(a[0]) if m else 0
    u = [[int(i == j) for j in range(m)] for i in range(m)]
    v = [[int(i == j) for j in range(n)] for i in range(n)]

    def swap_rows(mat, i, j):
        mat[i], mat[j] = mat[j], mat[i]

    def swap_cols(mat, i, j):
        for row in mat:
            row[i], row[j] = row[j], row[i]

    def add_row(mat, src, dst, k):
        # row_dst += k * row_src
        if k:
            rs, rd = mat[src], mat[dst]
            for c in range(len(rd)):
                rd[c] += k * rs[c]

    def add_col(mat, src, dst, k):
        if k:
            for row in mat:
                row[dst] += k * row[src]

    for t in range(min(m, n)):
        # pivot: smallest nonzero |entry| in the remaining block
        while True:
            best = None
            for i in range(t, m):
                for j in range(t, n):
                    if a[i][j] and (best is None or abs(a[i][j]) < abs(a[best[0]][best[1]])):
                        best = (i, j)
            if best is None:
                return _finish(a, u, v, m, n)
            i, j = best
            swap_rows(a, t, i)
            swap_rows(u, t, i)
            swap_cols(a, t, j)
            swap_cols(v, t, j)
            p = a[t][t]
            done = True
            for i in range(t + 1, m):
                q = a[i][t] // p
                add_row(a, t, i, -q)
                add_row(u, t, i, -q)
                if a[i][t]:
                    done = False
            for j in range(t + 1, n):
                q = a[t][j] // p
                add_col(a, t, j, -q)
                add_col(v, t, j, -q)
                if a[t][j]:
                    done = False
            if not done:
                continue
            # divisibility d_t | rest
            bad = None
            for i in range(t + 1, m):
                for j in range(t + 1, n):
                    if a[i][j] % p:
                        bad = i
                        break
                if bad is not None:
                    break
            if bad is None:
                break
            add_row(a, bad, t, 1)
            add_row(u, bad, t, 1)
        if a[t][t] < 0:
            a[t] = [-x for x in a[t]]
            u[t] = [-x for x in u[t]]
    return _finish(a, u, v, m, n)


def _finish(a, u, v, m, n):
    for t in range(min(m, n)):
        if a[t][t] < 0:
            a[t] = [-x for x in a[t]]
            u[t] = [-x for x in u[t]]
    return (np.array(a, dtype=object), np.array(u, dtype=object), np.array(v, dtype=object))


def snf_diagonal(a) -> list[int]:
    d, _, _ = smith_normal_form(a)
    k = min(d.shape)
    return [int(d[i, i]) for i in range(k)]


def integer_inverse(u) -> np.ndarray:
    """Inverse of a unimodular integer matrix, exact."""
    from fractions import Fraction

    u = np.asarray(u, dtype=object)
    n = u.shape[0]
    aug = [[Fraction(int(u[i, j])) for j in range(n)] + [Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    for c in range(n):
        piv = next(r for r in range(c, n) if aug[r][c] != 0)
        aug[c], aug[piv] = aug[piv], aug[c]
        pv = aug[c][c]
        aug[c] = [x / pv for x in aug[c]]
        for r in range(n):
            if r != c and aug[r][c] != 0:
                f = aug[r][c]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[c])]
    out = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            x = aug[i][n + j]
            if x.denominator != 1:
                raise ValueError("matrix is not unimodular")
            out[i, j] = int(x)
    return out


def saturate_rows(a) -> np.ndarray:
    """Integer basis of (row span over R) intersected with Z^m."""
    a = np.asarray(a, dtype=object)
    d, _, v = smith_normal_form(a)
    r = sum(1 for i in range(min(d.shape)) if d[i, i] != 0)
    vinv = integer_inverse(v)
    return vinv[:r]
