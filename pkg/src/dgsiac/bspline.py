"""Central B-splines and SIAC convolution kernels.

Everything is assembled in exact rational arithmetic first and converted to
floating point only at the end, so the kernels carry no round-off from the
moment system.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial
import json

import numpy as np

from . import _rational as rq
from .errors import ConfigurationError

__all__ = [
    "PiecewisePoly1D", "SiacKernel", "TensorKernel", "central_bspline",
    "kernel_coefficients", "scaled_kernel", "directional_kernel",
    "kernel_to_json", "dump_kernel",
]


class PiecewisePoly1D:
    """Compactly supported piecewise polynomial on the real line.

    Piece ``k`` lives on ``[breakpoints[k], breakpoints[k+1]]`` and is stored
    in the local power basis ``sum_j coeffs[k, j] * (x - breakpoints[k])**j``.
    The function vanishes outside ``[breakpoints[0], breakpoints[-1]]``.

    Parameters
    ----------
    breakpoints : array_like, shape (n + 1,)
        Strictly increasing.
    coeffs : array_like, shape (n, degree + 1)
        Local power-basis coefficients.
    exact : tuple, optional
        ``(breakpoints, pieces)`` as Fractions, kept when the function was
        built in exact arithmetic.
    """

    def __init__(self, breakpoints, coeffs, exact=None):
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
        if self.coeffs.shape[0] != self.breakpoints.size - 1:
            raise ValueError("need exactly one coefficient row per interval")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        self.exact = exact

    @classmethod
    def from_exact(cls, breakpoints, global_pieces):
        """Build from rational breakpoints and pieces in the global variable."""
        breaks = [Fraction(b) for b in breakpoints]
        local = [rq.pshift(p, b) for p, b in zip(global_pieces, breaks[:-1])]
        deg = max(len(p) for p in local) - 1
        arr = np.zeros((len(local), deg + 1))
        for k, p in enumerate(local):
            arr[k, :len(p)] = [float(c) for c in p]
        return cls([float(b) for b in breaks], arr, exact=(breaks, local))

    @property
    def degree(self):
        return self.coeffs.shape[1] - 1

    @property
    def support(self):
        return float(self.breakpoints[0]), float(self.breakpoints[-1])

    def __repr__(self):
        lo, hi = self.support
        return (f"PiecewisePoly1D(pieces={self.coeffs.shape[0]}, "
                f"degree={self.degree}, support=[{lo:g}, {hi:g}])")

    def _locate(self, x):
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        # the right end of the support belongs to the last piece
        idx = np.where(x == self.breakpoints[-1], self.coeffs.shape[0] - 1, idx)
        inside = (idx >= 0) & (idx < self.coeffs.shape[0])
        return np.clip(idx, 0, self.coeffs.shape[0] - 1), inside

    def __call__(self, x, deriv=0):
        x = np.asarray(x, dtype=float)
        idx, inside = self._locate(x)
        return np.where(inside, self._eval_piece(idx, x, deriv), 0.0)

    def _eval_piece(self, idx, x, deriv):
        c = self.coeffs[idx]
        t = x - self.breakpoints[idx]
        deg = self.degree
        acc = np.zeros_like(t)
        for j in range(deg, deriv - 1, -1):
            fac = factorial(j) // factorial(j - deriv)
            acc = acc * t + fac * c[..., j]
        return acc

    def one_sided(self, k, deriv=0):
        """Left and right limits of a derivative at interior breakpoint ``k``."""
        if not 0 < k < self.breakpoints.size - 1:
            raise IndexError("interior breakpoints only")
        x = self.breakpoints[k]
        left = self._eval_piece(np.array(k - 1), np.array(x), deriv)
        right = self._eval_piece(np.array(k), np.array(x), deriv)
        return float(left), float(right)

    def derivative(self, order=1):
        c = self.coeffs
        for _ in range(order):
            if c.shape[1] == 1:
                c = np.zeros_like(c)
            else:
                c = c[:, 1:] * np.arange(1, c.shape[1])
        return PiecewisePoly1D(self.breakpoints, c)

    def integral(self):
        widths = np.diff(self.breakpoints)
        powers = np.arange(1, self.degree + 2)
        terms = self.coeffs * widths[:, None] ** powers / powers
        return float(terms.sum())

    def scaled(self, h, amplitude=1.0):
        """Return ``x -> amplitude * self(x / h)``."""
        powers = np.arange(self.degree + 1)
        return PiecewisePoly1D(self.breakpoints * h,
                               amplitude * self.coeffs / h ** powers)

    def to_dict(self):
        return {"breakpoints": self.breakpoints.tolist(),
                "coefficients": self.coeffs.tolist(),
                "basis": "local power basis in (x - left breakpoint)"}


@lru_cache(maxsize=None)
def _bspline_exact(order):
    """Rational breakpoints and global-variable pieces of psi^(order)."""
    half = Fraction(order, 2)
    breaks = [-half + j for j in range(order + 1)]
    norm = Fraction(1, factorial(order - 1))
    pieces = []
    for j in range(order):
        poly = [Fraction(0)]
        for k in range(j + 1):
            # truncated power (x + order/2 - k)_+^(order-1), active left of x
            term = rq.ppow([half - k, Fraction(1)], order - 1)
            poly = rq.padd(poly, rq.pscale(term, (-1) ** k * comb(order, k) * norm))
        pieces.append(poly)
    return tuple(breaks), tuple(tuple(p) for p in pieces)


def central_bspline(order):
    """Central B-spline of the given order.

    The closed truncated-power form of the recursion
    ``psi1 = indicator([-1/2, 1/2])``, ``psi(l+1) = psi1 * psi(l)``.
    Support ``[-order/2, order/2]``, degree ``order - 1``, unit mass.
    """
    if int(order) != order or order < 1:
        raise ValueError(f"B-spline order must be a positive integer, got {order!r}")
    breaks, pieces = _bspline_exact(int(order))
    return PiecewisePoly1D.from_exact(breaks, [list(p) for p in pieces])


def _moments(order, n):
    breaks, pieces = _bspline_exact(order)
    out = []
    for k in range(n):
        acc = Fraction(0)
        for (a, b), p in zip(zip(breaks[:-1], breaks[1:]), pieces):
            prim = rq.pinteg(rq.pmul(p, [Fraction(0)] * k + [Fraction(1)]))
            acc += rq.peval(prim, b) - rq.peval(prim, a)
        out.append(acc)
    return out


@lru_cache(maxsize=None)
def _coefficients_exact(q, order):
    if q < 1:
        raise ConfigurationError(f"SIAC kernels need q >= 1, got {q}")
    n = 2 * q + 1
    mu = _moments(order, n)
    shifts = [Fraction(-q + g) for g in range(n)]
    # row k: k-th moment of the kernel must equal delta_{k0}
    matrix = [[sum(comb(k, i) * s ** (k - i) * mu[i] for i in range(k + 1))
               for s in shifts] for k in range(n)]
    rhs = [Fraction(1)] + [Fraction(0)] * (n - 1)
    return tuple(rq.solve(matrix, rhs))


def kernel_coefficients(q, order=None):
    """Weights ``c_0 .. c_2q`` of the SIAC kernel as exact Fractions.

    Determined by reproduction of monomials up to degree ``2q``.  ``order``
    is the B-spline order (default ``q + 1``).
    """
    return _coefficients_exact(int(q), int(order if order is not None else q + 1))


@lru_cache(maxsize=None)
def _kernel_exact(q, order):
    coeffs = _coefficients_exact(q, order)
    sb, sp = _bspline_exact(order)
    half = Fraction(2 * q + order, 2)
    breaks = [-half + j for j in range(2 * q + order + 1)]
    pieces = [[Fraction(0)] for _ in range(len(breaks) - 1)]
    for g, c in enumerate(coeffs):
        shift = Fraction(-q + g)
        for j, p in enumerate(sp):
            # spline piece j sits on [sb[j] + shift, sb[j+1] + shift]
            k = breaks.index(sb[j] + shift)
            pieces[k] = rq.padd(pieces[k], rq.pscale(rq.pshift(list(p), -shift), c))
    return tuple(breaks), tuple(tuple(p) for p in pieces)


@dataclass(frozen=True)
class SiacKernel:
    """One-dimensional SIAC kernel built from ``2q + 1`` shifted B-splines.

    Attributes
    ----------
    q : int
        Polynomial degree the kernel is designed for.
    order : int
        B-spline order (``q + 1`` for the main filter).
    h : float
        Scaling; ``K_h(x) = K(x / h) / h``.
    """

    q: int
    order: int
    h: float = 1.0
    coefficients: tuple = field(init=False, repr=False)
    reference: PiecewisePoly1D = field(init=False, repr=False)
    piecewise: PiecewisePoly1D = field(init=False, repr=False)

    def __post_init__(self):
        if self.h <= 0:
            raise ConfigurationError("kernel scaling must be positive")
        object.__setattr__(self, "coefficients", kernel_coefficients(self.q, self.order))
        breaks, pieces = _kernel_exact(self.q, self.order)
        ref = PiecewisePoly1D.from_exact(breaks, [list(p) for p in pieces])
        object.__setattr__(self, "reference", ref)
        object.__setattr__(self, "piecewise", ref.scaled(self.h, 1.0 / self.h))

    @property
    def num_splines(self):
        return 2 * self.q + 1

    @property
    def width(self):
        """Support width in units of ``h``."""
        return 2 * self.q + self.order

    @property
    def support(self):
        return self.piecewise.support

    def __call__(self, x, deriv=0):
        return self.piecewise(x, deriv)


@dataclass(frozen=True)
class TensorKernel:
    """Tensor product of one-dimensional kernels, one factor per axis."""

    factors: tuple

    @property
    def dim(self):
        return len(self.factors)

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        out = np.ones(points.shape[:-1])
        for axis, k in enumerate(self.factors):
            out = out * k(points[..., axis])
        return out

    def integral(self):
        return float(np.prod([k.piecewise.integral() for k in self.factors]))


def scaled_kernel(q, h, order=None, dim=None):
    """Scaled SIAC kernel ``K_h``; a :class:`TensorKernel` when ``dim`` is given."""
    k = SiacKernel(int(q), int(order if order is not None else q + 1), float(h))
    if dim is None:
        return k
    return TensorKernel((k,) * int(dim))


def directional_kernel(q, h, axis, dim):
    """Kernel with spline order ``q + 2`` along ``axis`` and ``q + 1`` elsewhere.

    ``axis`` is zero based.
    """
    if not 0 <= axis < dim:
        raise ValueError(f"axis {axis} out of range for dimension {dim}")
    main = SiacKernel(int(q), int(q) + 1, float(h))
    smooth = SiacKernel(int(q), int(q) + 2, float(h))
    return TensorKernel(tuple(smooth if a == axis else main for a in range(dim)))


def kernel_to_json(kernel):
    """JSON-serialisable description of a :class:`SiacKernel`."""
    return {
        "q": kernel.q,
        "order": kernel.order,
        "h": kernel.h,
        "coefficients": [str(c) for c in kernel.coefficients],
        "coefficients_float": [float(c) for c in kernel.coefficients],
        "piecewise": kernel.piecewise.to_dict(),
    }


def dump_kernel(kernel, path):
    with open(path, "w") as fh:
        json.dump(kernel_to_json(kernel), fh, indent=2)
