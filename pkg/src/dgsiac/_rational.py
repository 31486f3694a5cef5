"""Tiny exact polynomial arithmetic over the rationals.

Polynomials are lists of :class:`fractions.Fraction` in increasing power
order.  Only what the kernel construction needs is implemented.
"""
from fractions import Fraction
from math import comb

__all__ = [
    "Fraction", "padd", "pscale", "pmul", "ppow", "pshift", "pderiv",
    "pinteg", "peval", "ptrim", "solve",
]


def ptrim(p):
    p = [Fraction(c) for c in p]
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return p or [Fraction(0)]


def padd(a, b):
    n = max(len(a), len(b))
    return ptrim([(a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0)
                  for i in range(n)])


def pscale(a, s):
    return ptrim([c * s for c in a])


def pmul(a, b):
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            out[i + j] += ai * bj
    return ptrim(out)


def ppow(a, n):
    out = [Fraction(1)]
    for _ in range(n):
        out = pmul(out, a)
    return out


def pshift(a, s):
    """Return the coefficients of ``x -> a(x + s)``."""
    s = Fraction(s)
    out = [Fraction(0)] * len(a)
    for k, ak in enumerate(a):
        for i in range(k + 1):
            out[i] += ak * comb(k, i) * s ** (k - i)
    return ptrim(out)


def pderiv(a):
    if len(a) == 1:
        return [Fraction(0)]
    return ptrim([k * a[k] for k in range(1, len(a))])


def pinteg(a):
    """Antiderivative vanishing at zero."""
    return ptrim([Fraction(0)] + [c / (k + 1) for k, c in enumerate(a)])


def peval(a, x):
    acc = Fraction(0)
    for c in reversed(a):
        acc = acc * x + c
    return acc


def solve(matrix, rhs):
    """Gauss-Jordan elimination in exact arithmetic."""
    n = len(rhs)
    a = [[Fraction(v) for v in row] + [Fraction(r)] for row, r in zip(matrix, rhs)]
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col] != 0), None)
        if piv is None:
            raise ArithmeticError("singular system")
        a[col], a[piv] = a[piv], a[col]
        inv = 1 / a[col][col]
        a[col] = [v * inv for v in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [vr - f * vc for vr, vc in zip(a[r], a[col])]
    return [a[r][n] for r in range(n)]
