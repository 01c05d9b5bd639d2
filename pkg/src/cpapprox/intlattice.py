"""Exact integer linear algebra: column Hermite form, integer kernels, continued fractions.

All arithmetic is on Python ints, so intermediate growth never overflows.
"""
from __future__ import annotations

from fractions import Fraction
from math import gcd

__all__ = ["column_hermite", "integer_kernel", "convergents", "best_convergent"]


def column_hermite(A):
    """Column-style Hermite reduction ``A U = [H | 0]`` with ``U`` unimodular.

    Returns ``(H, U, rank)`` where ``H`` is the reduced copy of ``A`` (lists of
    ints) and the first ``rank`` columns of ``H`` carry the pivots.
    """
    A = [[int(v) for v in row] for row in A]
    m = len(A)
    n = len(A[0]) if m else 0
    U = [[int(i == j) for j in range(n)] for i in range(n)]

    def swap(j, k):
        for M in (A, U):
            for row in M:
                row[j], row[k] = row[k], row[j]

    def axpy(j, f, k):
        # column j -= f * column k
        for M in (A, U):
            for row in M:
                row[j] -= f * row[k]

    c = 0
    for i in range(m):
        if c >= n:
            break
        while True:
            nz = [j for j in range(c, n) if A[i][j] != 0]
            if not nz:
                break
            jmin = min(nz, key=lambda j: abs(A[i][j]))
            if jmin != c:
                swap(c, jmin)
            finished = True
            for j in range(c + 1, n):
                if A[i][j]:
                    axpy(j, A[i][j] // A[i][c], c)
                    if A[i][j]:
                        finished = False
            if finished:
                break
        if c < n and A[i][c] != 0:
            if A[i][c] < 0:
                for M in (A, U):
                    for row in M:
                        row[c] = -row[c]
            # reduce earlier pivots' entries modulo this one
            for j in range(c):
                if A[i][c]:
                    axpy(j, A[i][j] // A[i][c], c)
            c += 1
    return A, U, c


def integer_kernel(A) -> list[list[int]]:
    """Basis (as a list of integer vectors) of ``{n in Z^k : A n = 0}``."""
    if not A:
        raise ValueError("empty matrix")
    _, U, rank = column_hermite(A)
    n = len(U)
    return [[U[r][j] for r in range(n)] for j in range(rank, n)]


def _cf_terms(x: Fraction, max_terms: int = 64):
    terms = []
    while len(terms) < max_terms:
        a = x.numerator // x.denominator
        terms.append(a)
        frac = x - a
        if frac == 0:
            break
        x = 1 / frac
    return terms


def convergents(x: float, max_terms: int = 64) -> list[Fraction]:
    """Continued-fraction convergents of ``x`` (exact for the float's value)."""
    terms = _cf_terms(Fraction(x), max_terms)
    out = []
    p0, q0, p1, q1 = 1, 0, terms[0], 1
    out.append(Fraction(p1, q1))
    for a in terms[1:]:
        p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
        out.append(Fraction(p1, q1))
    return out


def best_convergent(x: float, q_max: int) -> Fraction:
    """Last convergent of ``x`` whose denominator does not exceed ``q_max``."""
    if q_max < 1:
        raise ValueError("q_max must be >= 1")
    best = None
    for c in convergents(x):
        if c.denominator > q_max:
            break
        best = c
    return best


def lcm(a: int, b: int) -> int:
    return a * b // gcd(a, b)
