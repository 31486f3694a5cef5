"""Periodic Cartesian meshes and discontinuous piecewise polynomial fields.

Coefficient layout
------------------
A field with ``m`` components of degree ``q`` on an ``N**d`` mesh stores its
coefficients as ``coeffs[c, i_1, ..., i_d, a_1, ..., a_d]``: component, cell
multi-index, then the Legendre mode per axis.  The basis on every cell is the
tensor product of orthonormal Legendre polynomials on the reference interval
``[0, 1]`` so the mass matrix is ``h**d`` times the identity.
"""
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb
import json

import numpy as np
from numpy.polynomial import legendre

from .errors import AmbiguousPointError, ConfigurationError

__all__ = [
    "CartesianMesh", "TensorBasis", "DgField", "gauss_legendre", "l2_project",
    "evaluate", "evaluate_points", "broken_norms", "save_field", "load_field",
    "apply_along", "shifted_legendre_exact",
]


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Gauss-Legendre nodes and weights on ``[0, 1]``."""
    x, w = legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def apply_along(arr, mat, axis):
    """Contract ``mat[:, k]`` with axis ``axis`` of ``arr``, keeping its position."""
    axis = axis % arr.ndim
    if axis == arr.ndim - 1:
        return arr @ mat.T
    if axis == arr.ndim - 2:
        return np.matmul(mat, arr)
    return np.moveaxis(np.tensordot(mat, arr, axes=(1, axis)), 0, axis)


@dataclass(frozen=True)
class CartesianMesh:
    """Uniform ``N**d`` mesh of the unit torus."""

    dim: int
    cells_per_dim: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigurationError(f"only d = 1, 2 are supported, got {self.dim}")
        if self.cells_per_dim < 1:
            raise ConfigurationError("need at least one cell per direction")

    @property
    def N(self):
        return self.cells_per_dim

    @property
    def h(self):
        return 1.0 / self.cells_per_dim

    @property
    def shape(self):
        return (self.cells_per_dim,) * self.dim

    @property
    def n_cells(self):
        return self.cells_per_dim ** self.dim

    def cell_coordinates(self, xi):
        """Physical coordinates of reference points ``xi`` in every cell.

        Returns a tuple of ``d`` arrays broadcastable to ``(N,)*d + (n,)*d``.
        """
        xi = np.asarray(xi, dtype=float)
        n = xi.size
        d = self.dim
        out = []
        for a in range(d):
            shape = [1] * (2 * d)
            shape[a] = self.N
            cells = np.arange(self.N).reshape(shape)
            shape = [1] * (2 * d)
            shape[d + a] = n
            out.append((cells + xi.reshape(shape)) * self.h)
        return tuple(out)


@lru_cache(maxsize=None)
def shifted_legendre_exact(k):
    """Rational coefficients of ``P_k(2 x - 1)`` in the power basis."""
    return tuple(Fraction((-1) ** (k + j) * comb(k, j) * comb(k + j, j)) for j in range(k + 1))


@dataclass(frozen=True)
class TensorBasis:
    """Orthonormal Legendre modes of degree ``<= q`` on ``[0, 1]`` per axis."""

    degree: int
    dim: int = 1

    def __post_init__(self):
        if self.degree < 0:
            raise ConfigurationError("polynomial degree must be non-negative")

    @property
    def n_1d(self):
        return self.degree + 1

    @property
    def n_modes(self):
        return self.n_1d ** self.dim

    def values(self, xi, deriv=0):
        """Matrix ``V[g, a] = d^deriv phi_a(xi_g)`` (reference derivative)."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        return _basis_values(self.n_1d, tuple(xi.tolist()), deriv).copy()


    def normalization(self, a):
        return np.sqrt(2 * a + 1)


@lru_cache(maxsize=256)
def _basis_values(n_1d, xi, deriv):
    xi = np.asarray(xi, dtype=float)
    out = np.empty((xi.size, n_1d))
    for a in range(n_1d):
        c = np.zeros(a + 1)
        c[a] = np.sqrt(2 * a + 1)
        c = legendre.legder(c, deriv) * 2.0 ** deriv if deriv else c
        out[:, a] = legendre.legval(2.0 * xi - 1.0, c)
    return out


class DgField:
    """Vector-valued piecewise tensor-product polynomial on a periodic mesh.

    Parameters
    ----------
    mesh : CartesianMesh
    degree : int
    n_components : int
    coeffs : ndarray, optional
        Modal coefficients in the layout described in the module docstring.
    """

    def __init__(self, mesh, degree, n_components=1, coeffs=None):
        self.mesh = mesh
        self.basis = TensorBasis(degree, mesh.dim)
        self.n_components = n_components
        shape = (n_components,) + mesh.shape + (degree + 1,) * mesh.dim
        if coeffs is None:
            coeffs = np.zeros(shape)
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != shape:
            raise ValueError(f"coefficient shape {coeffs.shape} != expected {shape}")
        self.coeffs = coeffs

    @property
    def degree(self):
        return self.basis.degree

    @property
    def dim(self):
        return self.mesh.dim

    def __repr__(self):
        return (f"DgField(dim={self.dim}, N={self.mesh.N}, q={self.degree}, "
                f"m={self.n_components})")

    def copy(self, coeffs=None):
        return DgField(self.mesh, self.degree, self.n_components,
                       self.coeffs.copy() if coeffs is None else coeffs)

    @property
    def flat(self):
        """Coefficients as ``(cell, component, mode)`` with row-major cells."""
        d = self.dim
        c = np.moveaxis(self.coeffs, 0, d)
        return c.reshape(self.mesh.n_cells, self.n_components, self.basis.n_modes)

    @classmethod
    def from_flat(cls, mesh, degree, flat):
        flat = np.asarray(flat, dtype=float)
        m = flat.shape[1]
        c = flat.reshape(mesh.shape + (m,) + (degree + 1,) * mesh.dim)
        return cls(mesh, degree, m, np.moveaxis(c, mesh.dim, 0))

    def cell_means(self):
        """Cell averages, shape ``(m,) + mesh.shape``."""
        idx = (slice(None),) * (1 + self.dim) + (0,) * self.dim
        return self.coeffs[idx].copy()

    def mean(self):
        """Torus mean of every component."""
        return self.cell_means().reshape(self.n_components, -1).mean(axis=1)

    def at_reference(self, xi, deriv=None):
        """Values at reference points in every cell.

        ``deriv`` is an optional per-axis tuple of reference derivative orders.
        Physical derivatives need the ``h**-k`` factor applied by the caller.
        """
        deriv = deriv or (0,) * self.dim
        out = self.coeffs
        for a in range(self.dim):
            out = apply_along(out, self.basis.values(xi, deriv[a]), 1 + self.dim + a)
        return out


def l2_project(f, mesh, degree, n_quad=None):
    """Cellwise L2 projection of ``f`` onto the dG space.

    ``f`` receives a tuple of coordinate arrays and returns either an array
    shaped like them (scalar field) or one with a leading component axis.
    """
    nq = n_quad or degree + 3
    xi, w = gauss_legendre(nq)
    X = mesh.cell_coordinates(xi)
    vals = np.asarray(f(X), dtype=float)
    full = mesh.shape + (nq,) * mesh.dim
    if vals.ndim == 2 * mesh.dim:
        vals = vals[None]
    vals = np.broadcast_to(vals, vals.shape[:1] + full)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("projected function returned non-finite values")
    field = DgField(mesh, degree, vals.shape[0])
    test = (w[:, None] * field.basis.values(xi)).T
    out = vals
    for a in range(mesh.dim):
        out = apply_along(out, test, 1 + mesh.dim + a)
    field.coeffs = np.ascontiguousarray(out)
    return field


def _locate(mesh, point, side, tol=1e-13):
    cells, local = [], []
    for x in point:
        s = (x % 1.0) * mesh.N
        j = int(np.floor(s))
        theta = s - j
        if theta < tol or theta > 1 - tol:
            j = int(round(s))
            if side is None:
                raise AmbiguousPointError(
                    f"coordinate {x!r} lies on a cell face; pass side='-' or '+'")
            if side == "-":
                j, theta = j - 1, 1.0
            elif side == "+":
                theta = 0.0
            else:
                raise ValueError("side must be '-' or '+'")
        cells.append(j % mesh.N)
        local.append(theta)
    return tuple(cells), local


def evaluate(field, point, side=None):
    """Evaluate a field at one torus point.

    On a face, ``side='-'`` takes the trace from the cell below the face in
    each affected direction and ``side='+'`` the one above.
    """
    point = np.atleast_1d(np.asarray(point, dtype=float))
    if point.size != field.dim:
        raise ValueError("point dimension does not match the mesh")
    cells, local = _locate(field.mesh, point, side)
    c = field.coeffs[(slice(None),) + cells]
    for theta in local:
        c = np.tensordot(c, field.basis.values([theta])[0], axes=([1], [0]))
    return c


def evaluate_points(field, points, deriv=None):
    """Vectorised evaluation at interior points, shape ``(n, d)`` -> ``(m, n)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float)) % 1.0
    s = pts * field.mesh.N
    j = np.floor(s).astype(int) % field.mesh.N
    theta = s - np.floor(s)
    deriv = deriv or (0,) * field.dim
    out = field.coeffs[(slice(None),) + tuple(j[:, a] for a in range(field.dim))]
    for a in range(field.dim):
        v = field.basis.values(theta[:, a], deriv[a]) * field.mesh.N ** deriv[a]
        # contract the leading remaining mode axis
        out = np.einsum("mna...,na->mn...", out, v)
    return out


def broken_norms(field, mesh=None, degree=None, n_quad=None, grad=None):
    """L2 norm, H1 seminorm and a sampled sup norm over the torus.

    ``field`` is a :class:`DgField` or a callable of coordinate arrays; for a
    callable, ``mesh`` sets the breakpoints and ``grad`` (returning
    ``(d, m, ...)``) enables the seminorm.  The sup norm is the maximum over
    quadrature nodes and cell vertices, a lower bound of the true supremum.
    """
    if isinstance(field, DgField):
        mesh = field.mesh
        q = field.degree
        nq = n_quad or q + 2
        xi, w = gauss_legendre(nq)
        vals = field.at_reference(xi)
        grads = []
        for a in range(mesh.dim):
            der = [0] * mesh.dim
            der[a] = 1
            grads.append(field.at_reference(xi, tuple(der)) / mesh.h)
        corners = field.at_reference(np.array([0.0, 1.0]))
    else:
        if mesh is None:
            raise ValueError("a mesh is required for callable integrands")
        nq = n_quad or (degree or 2) + 4
        xi, w = gauss_legendre(nq)
        X = mesh.cell_coordinates(xi)
        full = mesh.shape + (nq,) * mesh.dim
        vals = np.asarray(field(X), dtype=float)
        if vals.ndim == 2 * mesh.dim:
            vals = vals[None]
        vals = np.broadcast_to(vals, vals.shape[:1] + full)
        grads = None
        if grad is not None:
            g = np.asarray(grad(X), dtype=float)
            grads = [np.broadcast_to(g[a], vals.shape) for a in range(mesh.dim)]
        Xc = mesh.cell_coordinates(np.array([0.0, 1.0]))
        cv = np.asarray(field(Xc), dtype=float)
        corners = cv[None] if cv.ndim == 2 * mesh.dim else cv
    d = mesh.dim
    weight = mesh.h ** d
    wt = np.ones((1,) * (1 + d) + (nq,) * d)
    for a in range(d):
        shape = [1] * (1 + 2 * d)
        shape[1 + d + a] = nq
        wt = wt * w.reshape(shape)
    l2 = np.sqrt(weight * np.sum(wt * vals ** 2))
    h1 = None
    if grads is not None:
        h1 = np.sqrt(weight * sum(np.sum(wt * g ** 2) for g in grads))
    linf = max(np.max(np.abs(vals)), np.max(np.abs(corners)))
    return {"l2": float(l2), "h1_semi": None if h1 is None else float(h1),
            "linf": float(linf)}


def save_field(path, field, time=0.0):
    """Write a snapshot: one JSON header line followed by raw float64 data.

    The data are ordered cell-major, then component, then mode.
    """
    header = {"dim": field.dim, "N": field.mesh.N, "q": field.degree,
              "m": field.n_components, "time": float(time),
              "layout": "cell,component,mode", "dtype": "<f8"}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        fh.write(np.ascontiguousarray(field.flat, dtype="<f8").tobytes())


def load_field(path):
    """Read a snapshot written by :func:`save_field`; returns ``(field, time)``."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        data = np.frombuffer(fh.read(), dtype="<f8")
    mesh = CartesianMesh(header["dim"], header["N"])
    n_modes = (header["q"] + 1) ** header["dim"]
    flat = data.reshape(mesh.n_cells, header["m"], n_modes)
    return DgField.from_flat(mesh, header["q"], flat), header["time"]
