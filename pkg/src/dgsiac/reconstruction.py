"""Hermite reconstruction in time and SIAC convolution in space.

The filter is applied through the convolved basis

    G_a(s) = int_0^1 K(s - z) phi_a(z) dz,

computed once per kernel in exact arithmetic.  For a field with coefficients
``c[i, a]`` on a mesh of width ``h`` the filtered function is
``sum_{i,a} c[i, a] G_a(x / h - i)`` (periodic images included), and
derivatives carry a factor ``h**-k``.  ``G_a`` is a piecewise polynomial on
the half-integer grid, so the filtered field is polynomial on every half cell.
"""
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb
import json

import numpy as np

from . import _rational as rq
from .bspline import PiecewisePoly1D, SiacKernel, TensorKernel, _kernel_exact
from .errors import ConfigurationError, DegenerateStencilError
from .mesh import DgField, shifted_legendre_exact

__all__ = [
    "hermite_weights", "history_depth", "TemporalReconstruction", "convolved_basis",
    "FilteredField", "siac_convolve", "SpaceTimeReconstruction", "auxiliary_reconstruction",
    "evaluation_matrix", "save_filtered",
]


# ---------------------------------------------------------------------------
# time

def history_depth(q):
    """History depth ``p``: 0 (cubic) for ``q = 1``, 1 (quintic) for ``q >= 2``."""
    return 0 if q <= 1 else 1


def hermite_weights(nodes, t, deriv=0):
    """Weights of Hermite interpolation in value and derivative data.

    The interpolant of degree ``2K - 1`` through ``K`` nodes satisfies
    ``p(t) = sum_j alpha_j u_j + beta_j w_j`` where ``u_j, w_j`` are the value
    and slope at ``nodes[j]``.  Built from Newton divided differences on the
    doubled node sequence.

    Returns
    -------
    alpha, beta : ndarray, shape (K,) or (len(t), K)
    """
    nodes = np.asarray(nodes, dtype=float)
    K = nodes.size
    scale = max(np.ptp(nodes), np.finfo(float).tiny)
    if K > 1 and np.min(np.diff(np.sort(nodes))) <= 1e-13 * scale:
        raise DegenerateStencilError(f"repeated time nodes in stencil {nodes.tolist()}")
    origin = nodes[0]
    z = np.repeat((nodes - origin) / scale, 2)
    n = 2 * K
    # unit data: column 2j is the value at node j, 2j+1 the slope
    level = np.zeros((n, n))
    for i in range(n):
        if i % 2 == 0:
            level[i, i] = 1.0
        else:
            level[i, i - 1] = 1.0
    slopes = np.zeros((n, n))
    for j in range(K):
        slopes[2 * j, 2 * j + 1] = scale  # derivative in scaled time
    newton = [level[0].copy()]
    cur = level
    for k in range(1, n):
        nxt = np.empty((n - k, n))
        for i in range(n - k):
            dz = z[i + k] - z[i]
            if dz == 0.0:
                nxt[i] = slopes[i]
            else:
                nxt[i] = (cur[i + 1] - cur[i]) / dz
        newton.append(nxt[0].copy())
        cur = nxt
    s = (np.atleast_1d(np.asarray(t, dtype=float)) - origin) / scale
    val = np.zeros((s.size, n))
    der = np.zeros((s.size, n))
    prod = np.ones(s.size)
    dprod = np.zeros(s.size)
    for k in range(n):
        val += prod[:, None] * newton[k]
        der += dprod[:, None] * newton[k]
        dprod = dprod * (s - z[k]) + prod
        prod = prod * (s - z[k])
    out = val if deriv == 0 else der / scale
    if deriv not in (0, 1):
        raise ValueError("only value and first time derivative are available")
    out = out if np.ndim(t) else out[0]
    return out[..., 0::2], out[..., 1::2]


class TemporalReconstruction:
    """Piecewise Hermite reconstruction of nodal values and slopes.

    Slab ``n`` covers ``[t_n, t_{n+1}]`` and interpolates the data at
    ``t_{n-p}, ..., t_{n+1}``; the first ``p`` slabs use ``t_0, ..., t_{p+1}``.
    Values are returned as arrays combining the stored nodal arrays (any
    shape, e.g. raveled dG coefficients).
    """

    def __init__(self, times, values, derivatives, p=0):
        self.times = np.asarray(times, dtype=float)
        self.values = values
        self.derivatives = derivatives
        self.p = int(p)
        if len(values) != self.times.size or len(derivatives) != self.times.size:
            raise ValueError("need one value and one slope per time node")
        if self.n_slabs < self.p + 1:
            raise ConfigurationError(
                f"history depth {self.p} needs at least {self.p + 1} steps, got {self.n_slabs}")
        if np.any(np.diff(self.times) <= 0):
            raise DegenerateStencilError("time nodes must be strictly increasing")

    @classmethod
    def from_record(cls, record, p=None):
        return cls(record.times, record.values, record.derivatives,
                   history_depth(record.degree) if p is None else p)

    @property
    def degree(self):
        return 2 * self.p + 3

    @property
    def n_slabs(self):
        return self.times.size - 1

    def stencil(self, n):
        start = max(0, n - self.p)
        return np.arange(start, start + self.p + 2)

    def slab_of(self, t):
        if t < self.times[0] or t > self.times[-1]:
            raise ValueError(f"time {t} outside [{self.times[0]}, {self.times[-1]}]")
        n = int(np.searchsorted(self.times, t, side="right")) - 1
        return min(n, self.n_slabs - 1)

    def weights(self, n, t, deriv=0):
        idx = self.stencil(n)
        return idx, hermite_weights(self.times[idx], t, deriv)

    def __call__(self, t, deriv=0, slab=None):
        n = self.slab_of(t) if slab is None else slab
        idx, (alpha, beta) = self.weights(n, t, deriv)
        out = np.zeros_like(np.asarray(self.values[idx[0]], dtype=float))
        for j, a, b in zip(idx, alpha, beta):
            out = out + a * self.values[j] + b * self.derivatives[j]
        return out


# ---------------------------------------------------------------------------
# convolved basis

def _antiderivative_term(z_poly, power):
    """``z**(power+1) / (power+1)`` with ``z`` a polynomial in s."""
    return rq.pscale(rq.ppow(z_poly, power + 1), Fraction(1, power + 1))


@lru_cache(maxsize=None)
def _convolved_exact(q, order, a):
    """Half-integer breakpoints and pieces (global variable) of unnormalized G_a."""
    breaks, pieces = _kernel_exact(q, order)
    lo, hi = breaks[0], breaks[-1] + 1
    grid = [lo + Fraction(k, 2) for k in range(int(2 * (hi - lo)) + 1)]
    leg = shifted_legendre_exact(a)
    out = []
    for s0 in grid[:-1]:
        mid = s0 + Fraction(1, 4)
        total = [Fraction(0)]
        for bj, bj1, kp in zip(breaks[:-1], breaks[1:], pieces):
            if max(0, mid - bj1) >= min(1, mid - bj):
                continue
            lower = [Fraction(0)] if mid - bj1 <= 0 else [-bj1, Fraction(1)]
            upper = [Fraction(1)] if mid - bj >= 1 else [-bj, Fraction(1)]
            for l, kl in enumerate(kp):
                if kl == 0:
                    continue
                for r in range(l + 1):
                    coef = kl * comb(l, r) * (-1) ** r
                    sig = [Fraction(0)] * (l - r) + [Fraction(1)]
                    for s_, ps in enumerate(leg):
                        if ps == 0:
                            continue
                        prim = rq.padd(_antiderivative_term(upper, r + s_),
                                       rq.pscale(_antiderivative_term(lower, r + s_), -1))
                        total = rq.padd(total, rq.pscale(rq.pmul(sig, prim), coef * ps))
        out.append(tuple(total))
    return tuple(grid), tuple(out)


@lru_cache(maxsize=None)
def _identity_exact(a):
    grid = (Fraction(0), Fraction(1, 2), Fraction(1))
    leg = tuple(shifted_legendre_exact(a))
    return grid, (leg, leg)


@lru_cache(maxsize=None)
def convolved_basis(q, kernel=None):
    """``G_0 .. G_q`` as :class:`PiecewisePoly1D` in the reference variable.

    ``kernel`` is ``(kernel_q, spline_order)`` or ``None`` for the identity
    (plain dG evaluation, ``G_a = phi_a`` on ``[0, 1]``).
    """
    out = []
    for a in range(q + 1):
        if kernel is None:
            grid, pieces = _identity_exact(a)
        else:
            grid, pieces = _convolved_exact(kernel[0], kernel[1], a)
        pp = PiecewisePoly1D.from_exact(grid, [list(p) for p in pieces])
        norm = np.sqrt(2 * a + 1)
        out.append(PiecewisePoly1D(pp.breakpoints, norm * pp.coeffs, exact=pp.exact))
    return tuple(out)


def _kernel_key(k):
    if k is None:
        return None
    if isinstance(k, SiacKernel):
        return (k.q, k.order)
    return tuple(k)


def evaluation_matrix(q, N, points, kernel=None, deriv=0):
    """Dense matrix ``E[p, i*(q+1) + a]`` of ``d^k/dx^k G_a(x_p / h - i)``.

    ``points`` are coordinates on the unit torus; all periodic images of the
    basis function are summed.
    """
    key = _kernel_key(kernel)
    basis = convolved_basis(q, key)
    h = 1.0 / N
    lo, hi = basis[0].support
    x = np.asarray(points, dtype=float)
    sigma = x[:, None] / h - np.arange(N)[None, :]
    sigma = lo + np.mod(sigma - lo, N)
    n_images = int(np.ceil((hi - lo) / N))
    E = np.zeros((x.size, N, q + 1))
    for a, G in enumerate(basis):
        for k in range(n_images):
            E[:, :, a] += G(sigma + k * N, deriv)
    E *= h ** (-deriv)
    return E.reshape(x.size, N * (q + 1))


def _coeff_matrix(coeffs, dim):
    """Reorder ``(m, N.., a..)`` to ``(m, N*(q+1), ...)`` with ``(i, a)`` pairs."""
    m = coeffs.shape[0]
    N = coeffs.shape[1]
    q1 = coeffs.shape[-1]
    if dim == 1:
        return coeffs.reshape(m, N * q1)
    return coeffs.transpose(0, 1, 3, 2, 4).reshape(m, N * q1, N * q1)


class FilteredField:
    """Exact convolution of a dG field with a tensor-product kernel.

    Parameters
    ----------
    field : DgField
    factors : tuple
        One entry per axis: a :class:`SiacKernel` (reference shape is used,
        scaled by the mesh width) or ``None`` for no filtering along that axis.
    """

    def __init__(self, field, factors):
        self.field = field
        self.factors = tuple(factors)
        if len(self.factors) != field.dim:
            raise ValueError("need one kernel factor per axis")
        self._C = _coeff_matrix(field.coeffs, field.dim)

    @property
    def mesh(self):
        return self.field.mesh

    @property
    def degree(self):
        return self.field.degree

    def _matrix(self, axis, x, deriv):
        return evaluation_matrix(self.degree, self.mesh.N, x, self.factors[axis], deriv)

    def __call__(self, points, deriv=None):
        """Values at points ``(n, d)``; ``deriv`` is a per-axis order tuple."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = self.field.dim
        deriv = deriv or (0,) * d
        if sum(deriv) > 2 or min(deriv) < 0:
            raise ConfigurationError("only spatial derivatives up to second order are supported")
        Ex = self._matrix(0, pts[:, 0], deriv[0])
        if d == 1:
            return np.einsum("ni,mi->mn", Ex, self._C)
        Ey = self._matrix(1, pts[:, 1], deriv[1])
        return np.einsum("ni,mij,nj->mn", Ex, self._C, Ey)

    def grid_values(self, xs, deriv=None):
        """Values on the tensor grid ``xs[0] x xs[1]``, shape ``(m, len(x), len(y))``."""
        d = self.field.dim
        deriv = deriv or (0,) * d
        Ex = self._matrix(0, xs[0], deriv[0])
        if d == 1:
            return self._C @ Ex.T
        Ey = self._matrix(1, xs[1], deriv[1])
        return Ex @ self._C @ Ey.T

    def breakpoints(self, axis=0):
        """Piece boundaries along an axis: the half-cell grid."""
        return np.arange(2 * self.mesh.N + 1) * self.mesh.h / 2

    def pieces(self):
        """Local power-basis coefficients of the filtered function per half cell.

        Returns an array ``(m, 2N, deg+1)`` in 1D or ``(m, 2N, 2N, deg+1, deg+1)``
        in 2D, in the variable ``(x - x_k) / h`` on half cell ``k``.
        """
        mats = [self._piece_matrix(a) for a in range(self.field.dim)]
        if self.field.dim == 1:
            return np.einsum("kji,mi->mkj", mats[0], self._C)
        return np.einsum("kji,mil,rsl->mkrjs", mats[0], self._C, mats[1])

    def _piece_matrix(self, axis):
        q, N = self.degree, self.mesh.N
        basis = convolved_basis(q, _kernel_key(self.factors[axis]))
        deg = max(G.degree for G in basis)
        lo = basis[0].breakpoints[0]
        n_pieces = basis[0].coeffs.shape[0]
        P = np.zeros((2 * N, deg + 1, N, q + 1))
        for k in range(2 * N):
            for i in range(N):
                # half cell k in the variable s = x/h - i starts at k/2 - i
                start = lo + np.mod(k / 2.0 - i - lo, N)
                j = int(round((start - lo) * 2))
                while j < n_pieces:
                    for a, G in enumerate(basis):
                        P[k, :G.degree + 1, i, a] += G.coeffs[j]
                    j += 2 * N
        return P.reshape(2 * N, deg + 1, N * (q + 1))

    def mean(self):
        """Torus mean per component (exact, from the pieces)."""
        pc = self.pieces()
        h2 = self.mesh.h / 2
        # the directional kernel gives different degrees per axis
        w = [np.array([(0.5 ** (j + 1)) / (j + 1) for j in range(n)]) / 0.5
             for n in pc.shape[-self.field.dim:]]
        if self.field.dim == 1:
            return np.einsum("mkj,j->m", pc, w[0]) * h2
        return np.einsum("mkrjs,j,s->m", pc, w[0], w[1]) * h2 * h2


def siac_convolve(field, kernel):
    """Filter a dG field with a SIAC kernel (1D kernel or :class:`TensorKernel`)."""
    factors = kernel.factors if isinstance(kernel, TensorKernel) else (kernel,) * field.dim
    for k in factors:
        if k is not None and abs(k.h - field.mesh.h) > 1e-12 * field.mesh.h:
            raise ConfigurationError(
                f"kernel scaling {k.h} differs from the mesh width {field.mesh.h}")
    return FilteredField(field, factors)


def save_filtered(path, ff, time=0.0):
    """Snapshot of a filtered field: JSON header line plus raw piece data."""
    pc = np.ascontiguousarray(ff.pieces(), dtype="<f8")
    header = {"dim": ff.field.dim, "N": ff.mesh.N, "q": ff.degree,
              "m": ff.field.n_components, "time": float(time),
              "breakpoints": ff.breakpoints().tolist(),
              "piece_shape": list(pc.shape),
              "layout": "component,piece..,power..", "basis": "(x - x_k) / h",
              "dtype": "<f8"}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        fh.write(pc.tobytes())


# ---------------------------------------------------------------------------
# space-time

class SpaceTimeReconstruction:
    """Spatial filter composed with the temporal Hermite reconstruction.

    Works on the raveled coefficient data of a trajectory; since the filter
    is linear and acts in space only, time derivatives are filtered slopes.
    """

    def __init__(self, temporal, mesh, degree, n_components, factors):
        self.temporal = temporal
        self.mesh = mesh
        self.degree = degree
        self.n_components = n_components
        self.factors = tuple(factors)

    def field_at(self, t, deriv_t=0):
        shape = (self.n_components,) + self.mesh.shape + (self.degree + 1,) * self.mesh.dim
        c = self.temporal(t, deriv_t).reshape(shape)
        return DgField(self.mesh, self.degree, self.n_components, c)

    def filtered_at(self, t, deriv_t=0):
        return FilteredField(self.field_at(t, deriv_t), self.factors)

    def __call__(self, t, points, deriv_t=0, deriv_x=None):
        if deriv_t not in (0, 1):
            raise ConfigurationError("only first time derivatives are available")
        return self.filtered_at(t, deriv_t)(points, deriv_x)


def spacetime_reconstruction(temporal, mesh, degree, n_components, q_kernel=None):
    """``K_h * u_h^t`` with the main kernel of spline order ``q + 1``."""
    qk = degree if q_kernel is None else q_kernel
    k = SiacKernel(qk, qk + 1, mesh.h)
    return SpaceTimeReconstruction(temporal, mesh, degree, n_components, (k,) * mesh.dim)


def auxiliary_reconstruction(temporal, mesh, degree, n_components, beta):
    """Directional reconstruction with spline order ``q + 2`` along axis ``beta`` (0 based)."""
    if not 0 <= beta < mesh.dim:
        raise ValueError(f"axis {beta} out of range for dimension {mesh.dim}")
    main = SiacKernel(degree, degree + 1, mesh.h)
    smooth = SiacKernel(degree, degree + 2, mesh.h)
    factors = tuple(smooth if a == beta else main for a in range(mesh.dim))
    return SpaceTimeReconstruction(temporal, mesh, degree, n_components, factors)
