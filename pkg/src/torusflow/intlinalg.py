"""Exact integer linear algebra on small dense matrices.

Matrices are lists of lists of Python ints so nothing overflows. The
routines here back every sublattice construction in the package:
Hermite normal form, integer kernels, saturation, elementary divisors,
unimodular completion, and an LLL reduction used for relation finding.
"""

from __future__ import annotations

from fractions import Fraction
from math import gcd

import numpy as np


def as_int_matrix(M) -> list[list[int]]:
    rows = [[int(v) for v in row] for row in M]
    for row in rows:
        if len(row) != len(rows[0]):
            raise ValueError("ragged integer matrix")
    return rows


def transpose(M: list[list[int]], ncols: int | None = None) -> list[list[int]]:
    if not M:
        return [[] for _ in range(ncols or 0)]
    return [list(col) for col in zip(*M)]


def identity(n: int) -> list[list[int]]:
    return [[int(i == j) for j in range(n)] for i in range(n)]


def hnf(M) -> tuple[list[list[int]], list[list[int]], list[int]]:
    """Row-style Hermite normal form.

    Returns ``(H, U, pivots)`` with ``U @ M == H``, ``U`` unimodular,
    the first ``len(pivots)`` rows of ``H`` in echelon form with positive
    pivots and entries above each pivot reduced into ``[0, pivot)``, and
    the remaining rows of ``H`` zero.
    """
    H = as_int_matrix(M)
    m = len(H)
    n = len(H[0]) if m else 0
    U = identity(m)
    r = 0
    pivots: list[int] = []
    for c in range(n):
        if r == m:
            break
        while True:
            nz = [i for i in range(r, m) if H[i][c] != 0]
            if not nz:
                break
            p = min(nz, key=lambda i: abs(H[i][c]))
            H[r], H[p] = H[p], H[r]
            U[r], U[p] = U[p], U[r]
            clean = True
            for i in range(r + 1, m):
                if H[i][c]:
                    q = H[i][c] // H[r][c]
                    H[i] = [a - q * b for a, b in zip(H[i], H[r])]
                    U[i] = [a - q * b for a, b in zip(U[i], U[r])]
                    if H[i][c]:
                        clean = False
            if clean:
                break
        if H[r][c] == 0:
            continue
        if H[r][c] < 0:
            H[r] = [-a for a in H[r]]
            U[r] = [-a for a in U[r]]
        for i in range(r):
            q = H[i][c] // H[r][c]
            if q:
                H[i] = [a - q * b for a, b in zip(H[i], H[r])]
                U[i] = [a - q * b for a, b in zip(U[i], U[r])]
        pivots.append(c)
        r += 1
    return H, U, pivots


def rank(M) -> int:
    return len(hnf(M)[2])


def row_basis(M) -> list[list[int]]:
    """Canonical HNF basis of the integer row lattice of ``M``."""
    H, _, pivots = hnf(M)
    return H[: len(pivots)]


def left_kernel(M) -> list[list[int]]:
    """Z-basis of ``{x : x @ M == 0}``."""
    M = as_int_matrix(M)
    if not M:
        return []
    H, U, pivots = hnf(M)
    return [U[i] for i in range(len(pivots), len(M))]


def right_kernel(M, ncols: int) -> list[list[int]]:
    """Z-basis (HNF) of ``{m in Z^ncols : M @ m == 0}``."""
    M = as_int_matrix(M)
    if not M:
        return identity(ncols)
    K = left_kernel(transpose(M))
    return row_basis(K) if K else []


def saturate_rows(M, ncols: int) -> list[list[int]]:
    """HNF basis of ``span_Q(rows of M) ∩ Z^ncols``."""
    K = right_kernel(M, ncols)
    if not K:
        return identity(ncols)
    S = right_kernel(K, ncols)
    return S


def det(M) -> int:
    """Exact determinant by fraction-free Bareiss elimination."""
    A = as_int_matrix(M)
    n = len(A)
    if n == 0:
        return 1
    if any(len(row) != n for row in A):
        raise ValueError("determinant of a non-square matrix")
    sign = 1
    prev = 1
    for k in range(n - 1):
        if A[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if A[i][k] != 0), None)
            if swap is None:
                return 0
            A[k], A[swap] = A[swap], A[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                A[i][j] = (A[i][j] * A[k][k] - A[i][k] * A[k][j]) // prev
        prev = A[k][k]
    return sign * A[n - 1][n - 1]


def elementary_divisors(M) -> list[int]:
    """Nonzero Smith invariants ``d_1 | d_2 | ...`` of an integer matrix."""
    D = as_int_matrix(M)
    if not D or not D[0]:
        return []
    ncols = len(D[0])
    while True:
        D = hnf(D)[0]
        D = hnf(transpose(D, ncols))[0]
        D = transpose(D)
        ncols = len(D[0])
        off = any(
            D[i][j] for i in range(len(D)) for j in range(len(D[0])) if i != j
        )
        if not off:
            break
    diag = [abs(D[i][i]) for i in range(min(len(D), len(D[0]))) if D[i][i]]
    # enforce the divisibility chain
    for i in range(len(diag)):
        for j in range(i + 1, len(diag)):
            a, b = diag[i], diag[j]
            g = gcd(a, b)
            diag[i], diag[j] = g, a * b // g
    return diag


def inverse(M) -> list[list[Fraction]]:
    """Exact inverse over Q by Gauss-Jordan elimination."""
    n = len(M)
    A = [[Fraction(v) for v in row] + [Fraction(int(i == j)) for j in range(n)]
         for i, row in enumerate(M)]
    for c in range(n):
        p = next((i for i in range(c, n) if A[i][c] != 0), None)
        if p is None:
            raise ZeroDivisionError("singular matrix")
        A[c], A[p] = A[p], A[c]
        piv = A[c][c]
        A[c] = [v / piv for v in A[c]]
        for i in range(n):
            if i != c and A[i][c] != 0:
                f = A[i][c]
                A[i] = [a - f * b for a, b in zip(A[i], A[c])]
    return [row[n:] for row in A]


def unimodular_inverse(M) -> list[list[int]]:
    inv = inverse(M)
    out = []
    for row in inv:
        if any(v.denominator != 1 for v in row):
            raise ValueError("matrix is not unimodular")
        out.append([int(v) for v in row])
    return out


def unimodular_completion(G, ncols: int) -> list[list[int]]:
    """Extend a saturated basis ``G`` (k rows) to a unimodular matrix.

    The first k rows of the result are exactly the rows of ``G``.
    """
    G = as_int_matrix(G)
    k = len(G)
    if k == 0:
        return identity(ncols)
    # U @ G^T = [T; 0] with T unimodular because G is saturated
    _, U, pivots = hnf(transpose(G))
    if len(pivots) != k:
        raise ValueError("generator rows are dependent")
    W = transpose(unimodular_inverse(U))
    V = [list(r) for r in G] + W[k:]
    if abs(det(V)) != 1:
        raise ValueError("generators are not saturated")
    return V


def lll(B, delta: float = 0.99) -> np.ndarray:
    """LLL-reduce the rows of an integer basis.

    Gram-Schmidt data is carried in floating point as the R factor of a QR
    decomposition and refreshed after every swap; the basis itself is
    updated with exact int64 arithmetic.
    """
    B = np.array(B, dtype=np.int64)
    n = len(B)
    if n <= 1:
        return B.copy()

    def gso(B):
        return np.linalg.qr(B.T.astype(float), mode="r")

    R = gso(B)
    k = 1
    swaps = 0
    while k < n:
        for j in range(k - 1, -1, -1):
            q = round(R[j, k] / R[j, j])
            if q:
                B[k] -= q * B[j]
                R[:, k] -= q * R[:, j]
        mu = R[k - 1, k] / R[k - 1, k - 1]
        if R[k, k] ** 2 >= (delta - mu * mu) * R[k - 1, k - 1] ** 2:
            k += 1
        else:
            B[[k - 1, k]] = B[[k, k - 1]]
            R = gso(B)
            k = max(k - 1, 1)
            swaps += 1
            if swaps > 100000:
                raise RuntimeError("LLL failed to converge")
    return B
