"""Semidiscrete dG operators: Rusanov convection and interior-penalty diffusion.

Both operators return the Riesz representative in the dG space, i.e. the
assembled form divided by the (diagonal) mass matrix.  With the jump
``[[v]] = v^- - v^+`` across a face whose normal points from the ``-`` cell to
the ``+`` cell the forms read

    (f_h(u), psi) = -sum_K (f(u), grad psi)_K + sum_e (fhat, [[psi]])_e
    (A_h(u), psi) = -sum_K (A grad u, grad psi)_K
                    + sum_e ({g_e(u; u)}, [[psi]])_e
                    + sum_e ({g_e(u; psi)}, [[u]])_e
                    - sum_e (D_e [[u]], [[psi]])_e / h

so that ``f_h`` approximates ``div f`` and ``A_h`` approximates
``div(A grad u)`` (symmetric interior penalty).
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, InadmissibleStateError
from .mesh import DgField, apply_along, gauss_legendre, l2_project

__all__ = [
    "RusanovFlux", "PenaltyConfig", "convective_apply", "diffusive_apply",
    "assemble_linear_diffusion", "project_source",
]


class RusanovFlux:
    """Local Lax-Friedrichs flux of a problem.

    ``fhat(a, b, n) = (f_n(a) + f_n(b)) / 2 - lambda(a, b, n) (b - a) / 2``
    with ``lambda`` the larger spectral radius of ``sum_alpha n_alpha Df_alpha``
    at the two states.
    """

    def __init__(self, problem):
        self.problem = problem

    def normal_flux(self, u, n):
        f = self.problem.flux(u)
        return sum(n[a] * f[a] for a in range(len(n)) if n[a] != 0.0)

    def wave_speed(self, a, b, n):
        return np.maximum(self.problem.wave_speed(a, n), self.problem.wave_speed(b, n))

    def __call__(self, a, b, n):
        lam = self.wave_speed(a, b, n)
        return 0.5 * (self.normal_flux(a, n) + self.normal_flux(b, n)) - 0.5 * lam * (b - a)


@dataclass(frozen=True)
class PenaltyConfig:
    """Interior-penalty scaling ``D_e = c_pen (q+1)**2 sym(A_nn(u_avg))``."""

    c_pen: float = 2.0

    def matrix(self, A_nn, degree):
        """Penalty from the normal-normal diffusion block, shape ``(m, m, ...)``."""
        sym = 0.5 * (A_nn + np.swapaxes(A_nn, 0, 1))
        return self.c_pen * (degree + 1) ** 2 * sym


def _face_mats(basis, xi, axis, dim, side, deriv_axis=None):
    """Evaluation matrices per axis for a face normal to ``axis``."""
    s = 1.0 if side == "-" else 0.0
    mats = []
    for a in range(dim):
        k = 1 if a == deriv_axis else 0
        mats.append(basis.values([s], k) if a == axis else basis.values(xi, k))
    return mats


def _apply_mats(arr, mats, first_mode_axis):
    for a, M in enumerate(mats):
        arr = apply_along(arr, M, first_mode_axis + a)
    return arr


def _test_mats(mats, w, axis=None):
    """Transposed, quadrature-weighted versions of evaluation matrices."""
    out = []
    for a, M in enumerate(mats):
        out.append(M.T if a == axis else (w[:, None] * M).T)
    return out


def _check_admissible(problem, vals):
    ok = problem.is_admissible(vals) & np.isfinite(vals)
    if np.all(ok):
        return
    bad = np.argwhere(~ok)[0]
    comp = int(bad[0])
    d = problem.d
    cell = tuple(int(i) for i in bad[1:1 + d])
    raise InadmissibleStateError(
        f"inadmissible state {vals[tuple(bad)]!r} in component {comp} of cell {cell}",
        cell=cell, component=comp)


def convective_apply(u, problem, n_quad=None):
    """Discrete divergence ``f_h(u_h)`` of the convective flux."""
    mesh, basis = u.mesh, u.basis
    d, h = mesh.dim, mesh.h
    nq = n_quad or basis.degree + 3
    xi, w = gauss_legendre(nq)
    V = basis.values(xi)
    D = basis.values(xi, 1)
    first = 1 + d
    flux = RusanovFlux(problem)

    vals = _apply_mats(u.coeffs, [V] * d, first)
    _check_admissible(problem, vals)
    f = problem.flux(vals)
    out = np.zeros_like(u.coeffs)
    wV = (w[:, None] * V).T
    wD = (w[:, None] * D).T
    for a in range(d):
        mats = [wD if b == a else wV for b in range(d)]
        out -= _apply_mats(f[a], mats, first) / h

    for a in range(d):
        n = np.zeros(d)
        n[a] = 1.0
        minus_mats = _face_mats(basis, xi, a, d, "-")
        plus_mats = _face_mats(basis, xi, a, d, "+")
        um = _apply_mats(u.coeffs, minus_mats, first)
        up = np.roll(_apply_mats(u.coeffs, plus_mats, first), -1, axis=1 + a)
        fh = flux(um, up, n)
        out += _apply_mats(fh, _test_mats(minus_mats, w, a), first) / h
        out -= np.roll(_apply_mats(fh, _test_mats(plus_mats, w, a), first), 1, axis=1 + a) / h
    return DgField(mesh, basis.degree, u.n_components, out)


def _contract(A, v):
    # (m, m, ...) x (m, ...) -> (m, ...)
    return np.einsum("ij...,j...->i...", A, v)


def _contract_t(A, v):
    return np.einsum("ji...,j...->i...", A, v)


def diffusive_apply(u, problem, penalty=None, n_quad=None):
    """Interior-penalty approximation ``A_h(u_h)`` of ``div(A grad u)``."""
    mesh, basis = u.mesh, u.basis
    q = basis.degree
    if q < 1:
        raise ConfigurationError("the interior penalty operator needs q >= 1")
    penalty = penalty or PenaltyConfig()
    d, h = mesh.dim, mesh.h
    nq = n_quad or q + 3
    xi, w = gauss_legendre(nq)
    V = basis.values(xi)
    D = basis.values(xi, 1)
    first = 1 + d
    wV = (w[:, None] * V).T
    wD = (w[:, None] * D).T

    vals = _apply_mats(u.coeffs, [V] * d, first)
    A = problem.diffusion(vals)
    grads = [_apply_mats(u.coeffs, [D if b == a else V for b in range(d)], first) / h
             for a in range(d)]
    out = np.zeros_like(u.coeffs)
    for a in range(d):
        flux_a = sum(_contract(A[a, b], grads[b]) for b in range(d))
        mats = [wD if b == a else wV for b in range(d)]
        out -= _apply_mats(flux_a, mats, first) / h

    for a in range(d):
        traces = {}
        for side, shift in (("-", 0), ("+", -1)):
            mats = _face_mats(basis, xi, a, d, side)
            val = np.roll(_apply_mats(u.coeffs, mats, first), shift, axis=1 + a)
            g = []
            for b in range(d):
                gm = _face_mats(basis, xi, a, d, side, deriv_axis=b)
                g.append(np.roll(_apply_mats(u.coeffs, gm, first), shift, axis=1 + a) / h)
            traces[side] = (val, g, problem.diffusion(val))
        um, gm, Am = traces["-"]
        up, gp, Ap = traces["+"]
        jump = um - up
        avg_g = 0.5 * sum(_contract(Am[a, b], gm[b]) + _contract(Ap[a, b], gp[b])
                          for b in range(d))
        A_face = problem.diffusion(0.5 * (um + up))
        pen = _contract(penalty.matrix(A_face[a, a], q), jump) / h
        for side, sign, roll in (("-", 1.0, 0), ("+", -1.0, 1)):
            A_side = Am if side == "-" else Ap
            mats = _face_mats(basis, xi, a, d, side)
            term = _apply_mats(sign * (avg_g - pen), _test_mats(mats, w, a), first)
            for b in range(d):
                dm = _face_mats(basis, xi, a, d, side, deriv_axis=b)
                sym = 0.5 * _contract_t(A_side[a, b], jump)
                term = term + _apply_mats(sym, _test_mats(dm, w, a), first) / h
            out += np.roll(term, roll, axis=1 + a) / h
    return DgField(mesh, q, u.n_components, out)


def assemble_linear_diffusion(mesh, degree, problem, n_components=None, penalty=None):
    """Sparse matrix of ``A_h`` acting on raveled coefficient arrays.

    Only valid for state-independent diffusion.  The stencil is computed once
    from unit fields in the first cell and translated to every other cell.
    """
    if not problem.diffusion_is_constant:
        raise ConfigurationError(
            "matrix assembly needs a state-independent diffusion tensor; "
            "treat state-dependent diffusion explicitly")
    m = n_components or problem.m
    d = mesh.dim
    shape = (m,) + mesh.shape + (degree + 1,) * d
    n = int(np.prod(shape))
    rows, cols, data = [], [], []
    cell_ids = np.indices(mesh.shape).reshape(d, -1)
    for c in range(m):
        for modes in np.ndindex(*(degree + 1,) * d):
            unit = np.zeros(shape)
            unit[(c,) + (0,) * d + modes] = 1.0
            res = diffusive_apply(DgField(mesh, degree, m, unit), problem, penalty).coeffs
            nz = np.nonzero(res)
            vals = res[nz]
            for j in cell_ids.T:
                target = list(nz)
                for a in range(d):
                    target[1 + a] = (nz[1 + a] + j[a]) % mesh.N
                rows.append(np.ravel_multi_index(tuple(target), shape))
                src = (c,) + tuple(int(x) for x in j) + modes
                cols.append(np.full(vals.size, np.ravel_multi_index(src, shape)))
                data.append(vals)
    if not data:
        return sp.csr_matrix((n, n))
    L = sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    return L.tocsr()


def project_source(problem, mesh, degree, t, eps, n_quad=None):
    """L2 projection of the manufactured source at time ``t`` (``None`` if absent)."""
    if not problem.has_source:
        return None
    return l2_project(lambda X: problem.source(t, X, eps), mesh, degree,
                      n_quad=n_quad or degree + 3)
