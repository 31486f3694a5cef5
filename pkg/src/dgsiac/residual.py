"""Residual splitting and the space-time norms entering the estimators.

For a reconstruction ``u`` with auxiliary reconstructions ``ut^beta``

    r1  = d_t u + sum_a Df_a(u) d_a u - eps sum_a d_a Gt_a - s
    Gt_a = sum_b A_ab(u) d_b ut^b,   Gh_a = sum_b A_ab(u) d_b u
    r2  = sum_a d_a (Gt_a - Gh_a),    r = r1 + eps r2

where ``s`` is the manufactured source (absent from the unsourced problem).
``E_r2 = ||Gt - Gh||_{L2 L2}`` bounds ``||r2||_{L2 H^-1}``.

The norms are accumulated slab by slab: every nodal field and nodal slope
is filtered once onto a tensor grid of Gauss points (``2q + 3`` per half
cell per axis) and the Hermite weights then combine the filtered arrays at
``l + 2`` Gauss times per slab.
"""
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .bspline import SiacKernel
from .errors import ConfigurationError
from .mesh import gauss_legendre
from .reconstruction import (TemporalReconstruction, _coeff_matrix, auxiliary_reconstruction,
                             evaluation_matrix, hermite_weights, history_depth,
                             spacetime_reconstruction)

__all__ = [
    "residual_parts", "ReconstructionProvider", "ExactProvider", "ResidualField",
    "NormReport", "SpaceGrid", "spacetime_norms", "NormAccumulator",
]


# ---------------------------------------------------------------------------
# pointwise formulas

def _mv(A, v):
    return np.einsum("ij...,j...->i...", A, v)


def _diffusion_pairs(problem, u):
    """Index pairs ``(a, b)`` with a nonzero diffusion block somewhere."""
    A = np.asarray(problem.diffusion(u))
    d = problem.d
    if not problem.diffusion_is_constant:
        return [(a, b) for a in range(d) for b in range(d)]
    return [(a, b) for a in range(d) for b in range(d) if np.any(A[a, b] != 0)]


def _div_flux(problem, u, grad, second, first):
    """``sum_a d_a (sum_b A_ab(u) v^b)`` given ``d_b v^b`` and ``d_a d_b v^b``.

    ``second`` maps ``(a, b)`` to ``d_a d_b v^b``; ``first[b]`` is ``d_b v^b``.
    """
    A = problem.diffusion(u)
    out = 0.0
    for (a, b), arr in second.items():
        out = out + _mv(A[a, b], arr)
    dA = problem.diffusion_divergence_jacobian(u)
    if dA is not None:
        for a in range(problem.d):
            for b in range(problem.d):
                dAab = np.einsum("ijk...,k...->ij...", dA[a, b], grad[a])
                out = out + _mv(dAab, first[b])
    return out


def residual_parts(problem, eps, u, ut, grad, aux_grad=None, aux_hess=None, source=None,
                   hess=None):
    """Evaluate ``r1``, the flux gap, and optionally ``r2`` and ``r``.

    Parameters
    ----------
    u, ut : ndarray ``(m, ...)``
        Reconstruction and its time derivative.
    grad : ndarray ``(d, m, ...)``
    aux_grad : sequence, ``aux_grad[b] = d_b ut^b``
    aux_hess : dict, ``aux_hess[(a, b)] = d_a d_b ut^b``
    source : ndarray ``(m, ...)`` or None
    hess : ndarray ``(d, d, m, ...)``, optional
        Second derivatives of ``u``; enables ``r2`` and the direct ``r``.
    """
    d = problem.d
    jac = problem.flux_jacobian(u)
    conv = sum(_mv(jac[a], grad[a]) for a in range(d))
    base = ut + conv
    if source is not None:
        base = base - source
    out = {}
    A = problem.diffusion(u)
    if eps and aux_grad is not None:
        div_t = _div_flux(problem, u, grad, aux_hess, aux_grad)
        out["r1"] = base - eps * div_t
    elif eps:
        raise ConfigurationError("eps > 0 needs the auxiliary reconstructions")
    else:
        out["r1"] = base
    if aux_grad is not None:
        out["gap"] = np.stack([sum(_mv(A[a, b], aux_grad[b] - grad[b]) for b in range(d))
                               for a in range(d)])
    if hess is not None:
        pairs = {(a, b): hess[a, b] for a in range(d) for b in range(d)}
        div_h = _div_flux(problem, u, grad, pairs, [grad[b] for b in range(d)])
        out["r"] = base - eps * div_h
        if aux_grad is not None:
            out["r2"] = _div_flux(problem, u, grad, aux_hess, aux_grad) - div_h
    return out


# ---------------------------------------------------------------------------
# point evaluators

class ReconstructionProvider:
    """Derivatives of the space-time and auxiliary reconstructions at points."""

    def __init__(self, temporal, mesh, degree, n_components):
        self.main = spacetime_reconstruction(temporal, mesh, degree, n_components)
        self.aux = [auxiliary_reconstruction(temporal, mesh, degree, n_components, b)
                    for b in range(mesh.dim)]
        self.d = mesh.dim

    @staticmethod
    def _unit(d, *axes):
        k = [0] * d
        for a in axes:
            k[a] += 1
        return tuple(k)

    def value(self, t, pts):
        return self.main(t, pts)

    def dt(self, t, pts):
        return self.main(t, pts, deriv_t=1)

    def grad(self, t, pts):
        f = self.main.filtered_at(t)
        return np.stack([f(pts, self._unit(self.d, a)) for a in range(self.d)])

    def hess(self, t, pts):
        f = self.main.filtered_at(t)
        return np.stack([np.stack([f(pts, self._unit(self.d, a, b)) for b in range(self.d)])
                         for a in range(self.d)])

    def aux_grad(self, t, pts):
        return [self.aux[b].filtered_at(t)(pts, self._unit(self.d, b)) for b in range(self.d)]

    def aux_hess(self, t, pts):
        out = {}
        for b in range(self.d):
            f = self.aux[b].filtered_at(t)
            for a in range(self.d):
                out[(a, b)] = f(pts, self._unit(self.d, a, b))
        return out


class ExactProvider:
    """The manufactured solution in place of every reconstruction."""

    def __init__(self, exact, d=2):
        self.exact = exact
        self.d = d

    @staticmethod
    def _split(pts):
        pts = np.atleast_2d(pts)
        return (pts[:, 0], pts[:, 1])

    def value(self, t, pts):
        return self.exact.value(t, self._split(pts))

    def dt(self, t, pts):
        return self.exact.dt(t, self._split(pts))

    def grad(self, t, pts):
        return self.exact.grad(t, self._split(pts))

    def hess(self, t, pts):
        return self.exact.hess(t, self._split(pts))

    def aux_grad(self, t, pts):
        g = self.grad(t, pts)
        return [g[b] for b in range(self.d)]

    def aux_hess(self, t, pts):
        H = self.hess(t, pts)
        return {(a, b): H[a, b] for a in range(self.d) for b in range(self.d)}


class ResidualField:
    """Pointwise residual evaluators for one provider.

    Points must avoid the piece boundaries of the reconstruction (half-cell
    grid) where second derivatives jump.
    """

    def __init__(self, problem, eps, provider, exact=None):
        self.problem = problem
        self.eps = float(eps)
        self.provider = provider
        self.exact = exact if exact is not None else problem.exact

    def _source(self, t, pts):
        if not self.problem.has_source:
            return None
        pts = np.atleast_2d(pts)
        return self.problem.source(t, (pts[:, 0], pts[:, 1]), self.eps)

    def _parts(self, t, pts, with_hess=False):
        P = self.provider
        return residual_parts(
            self.problem, self.eps, P.value(t, pts), P.dt(t, pts), P.grad(t, pts),
            P.aux_grad(t, pts), P.aux_hess(t, pts), self._source(t, pts),
            P.hess(t, pts) if with_hess else None)

    def r1(self, t, pts):
        return self._parts(t, pts)["r1"]

    def flux_gap(self, t, pts):
        """``Gt - Gh`` with shape ``(d, m, n)``."""
        return self._parts(t, pts)["gap"]

    def r2(self, t, pts):
        return self._parts(t, pts, True)["r2"]

    def r(self, t, pts):
        """Full residual computed directly from the Hessian of the reconstruction."""
        return self._parts(t, pts, True)["r"]

    def all(self, t, pts):
        return self._parts(t, pts, True)


# ---------------------------------------------------------------------------
# quadrature

class SpaceGrid:
    """Tensor Gauss grid with ``n_points`` nodes per half cell per axis."""

    def __init__(self, N, q, d=2, n_points=None):
        self.N, self.q, self.d = N, q, d
        n = n_points or 2 * q + 3
        xi, w = gauss_legendre(n)
        h2 = 0.5 / N
        k = np.arange(2 * N)
        self.x = ((k[:, None] + xi[None, :]) * h2).ravel()
        self.w = np.tile(w * h2, 2 * N)

    @property
    def coords(self):
        if self.d == 1:
            return (self.x,)
        return (self.x[:, None], self.x[None, :])

    def sq_norm(self, arr):
        """``int |arr|^2`` over the torus for every leading index."""
        return self.integral(np.square(np.abs(arr)))

    def integral(self, arr):
        out = np.asarray(arr) @ self.w
        if self.d == 2:
            out = out @ self.w
        return out


def spacetime_norms(evaluator, times, grid, n_time=None):
    """Bochner norms of ``evaluator(t, coords) -> (m, ...)`` over ``times``.

    Returns ``L1L2``, ``L2L2`` and ``LinfL2``; the last one is the maximum
    over Gauss times and all nodes of ``times``.
    """
    times = np.asarray(times, dtype=float)
    tg, wg = gauss_legendre(n_time or 5)
    l1 = l2 = 0.0
    linf = 0.0
    for t0, t1 in zip(times[:-1], times[1:]):
        tau = t1 - t0
        for s, w in zip(tg, wg):
            val = np.sqrt(np.sum(grid.sq_norm(np.asarray(evaluator(t0 + s * tau, grid.coords)))))
            l1 += tau * w * val
            l2 += tau * w * val ** 2
            linf = max(linf, val)
    for t in times:
        val = np.sqrt(np.sum(grid.sq_norm(np.asarray(evaluator(t, grid.coords)))))
        linf = max(linf, val)
    return {"L1L2": float(l1), "L2L2": float(np.sqrt(l2)), "LinfL2": float(linf)}


@dataclass
class NormReport:
    """Space-time norms of one run.

    ``None`` marks a quantity that is undefined for the run (diffusive
    columns at ``eps = 0``, errors without an exact solution).
    """

    r1_L1L2: float
    err_dg_L2L2: Optional[float]
    err_LinfL2: Optional[float]
    err_L2H1: Optional[float]
    E_r2: Optional[float]
    recon_gap_LinfL2: float
    init_L2: Optional[float]
    err_LinfL2_components: Optional[list] = None
    sup_grad: Optional[list] = None
    sup_grad_norm: Optional[float] = None
    sup_div_v: Optional[float] = None
    state_min: Optional[list] = None
    state_max: Optional[list] = None
    r_u_weighted_L1L2: Optional[float] = None
    r_v1_L1L2: Optional[float] = None
    E_r2_v: Optional[float] = None
    init_relative_entropy_L1: Optional[float] = None
    init_v_L2: Optional[float] = None
    err_v_L2H1: Optional[float] = None
    err_v_LinfL2: Optional[float] = None
    r1_per_slab: list = field(default_factory=list)
    n_slabs: int = 0

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# streaming accumulation

class NormAccumulator:
    """Consume trajectory nodes one at a time and accumulate all norms.

    Parameters
    ----------
    problem : ProblemDefinition
    mesh : CartesianMesh
    q : int
    eps : float
    exact : ExactSolution or None
    p : int, optional
        History depth (default from ``q``).
    n_space, n_time : int, optional
        Quadrature overrides (``2q + 3`` per half cell, ``l + 2`` per slab).
    """

    def __init__(self, problem, mesh, q, eps, exact=None, p=None, n_space=None, n_time=None):
        if mesh.dim != 2 or problem.d != 2:
            raise ConfigurationError("the norm pipeline is implemented for d = 2")
        self.problem, self.mesh, self.q = problem, mesh, q
        self.eps = float(eps)
        self.exact = exact
        self.m = problem.m
        self.p = history_depth(q) if p is None else p
        self.ell = 2 * self.p + 3
        self.grid = SpaceGrid(mesh.N, q, 2, n_space)
        self.tg, self.wg = gauss_legendre(n_time or self.ell + 2)
        self.shape = (self.m,) + mesh.shape + (q + 1,) * 2
        self._setup_kinds()
        self.slots = self.p + 2
        self.buf = None
        self.times = []
        self.n_nodes = 0
        self._init_sums()

    # kinds are (name, factor_x, deriv_x, factor_y, deriv_y)
    def _setup_kinds(self):
        q = self.q
        main = (q, q + 1)
        aux = (q, q + 2)
        kinds = {"u": (main, 0, main, 0), "ux": (main, 1, main, 0), "uy": (main, 0, main, 1),
                 "dg": (None, 0, None, 0)}
        self.pairs = []
        if self.eps > 0:
            kinds["ax"] = (aux, 1, main, 0)
            kinds["ay"] = (main, 0, aux, 1)
            sample = np.ones((self.m, 1, 1))
            self.pairs = _diffusion_pairs(self.problem, sample)
            names = {(0, 0): (aux, 2, main, 0), (1, 0): (aux, 1, main, 1),
                     (0, 1): (main, 1, aux, 1), (1, 1): (main, 0, aux, 2)}
            for pr in self.pairs:
                kinds[f"h{pr[0]}{pr[1]}"] = names[pr]
        self.kinds = list(kinds)
        x = self.grid.x
        cache = {}
        self.mats = []
        for name in self.kinds:
            fx, dx, fy, dy = kinds[name]
            for key in ((fx, dx), (fy, dy)):
                if key not in cache:
                    cache[key] = evaluation_matrix(q, self.mesh.N, x, key[0], key[1])
            self.mats.append((cache[(fx, dx)], cache[(fy, dy)]))

    def _init_sums(self):
        z = lambda: 0.0
        self.s = {"r1": z(), "dg": z(), "h1": z(), "h1v": z(), "er2": z(), "er2v": z(),
                  "ru": z(), "rv": z()}
        self.err_max = np.zeros(self.m)
        self.err_max_total = 0.0
        self.err_v_max = 0.0
        self.gap_max = 0.0
        self.sup_grad = np.zeros(2)
        self.sup_grad_norm = 0.0
        self.sup_div_v = 0.0
        self.state_min = np.full(self.m, np.inf)
        self.state_max = np.full(self.m, -np.inf)
        self.r1_slabs = []
        self.init = None

    def _filter(self, x):
        C = _coeff_matrix(x.reshape(self.shape), 2)
        return np.stack([Ex @ C @ Ey.T for Ex, Ey in self.mats])

    def _exact(self, t, what="value"):
        X = self.grid.coords
        return getattr(self.exact, what)(t, X)

    def _source(self, t):
        if not self.problem.has_source:
            return None
        return self.problem.source(t, self.grid.coords, self.eps)

    def push(self, t, u, w):
        """Add node ``(t_k, u^k, w^k)``; completes every slab that became available."""
        k = self.n_nodes
        if self.times and t <= self.times[-1]:
            raise ConfigurationError("time nodes must be strictly increasing")
        self.times.append(float(t))
        Fu, Fw = self._filter(u), self._filter(w)
        if self.buf is None:
            # ring buffer: slots [0, S) hold filtered values, [S, 2S) filtered slopes
            self.buf = np.empty((2 * self.slots,) + Fu.shape)
            self.V = np.empty((self.tg.size, Fu.size))
        self.buf[k % self.slots] = Fu
        self.buf[self.slots + k % self.slots] = Fw
        self.n_nodes += 1
        self._node_sample(k, Fu)
        p = self.p
        if k == p + 1:
            for n in range(p + 1):
                self._slab(n)
        elif k > p + 1:
            self._slab(k - 1)

    def _node_sample(self, k, Fu):
        t = self.times[k]
        vals = {name: Fu[i] for i, name in enumerate(self.kinds)}
        self._sample_states(vals)
        if self.exact is not None:
            e = vals["u"] - self._exact(t)
            e2 = self.grid.sq_norm(e)
            self.err_max = np.maximum(self.err_max, e2)
            self.err_max_total = max(self.err_max_total, float(e2.sum()))
            self.err_v_max = max(self.err_v_max, float(e2[1:].sum()))
            if k == 0:
                self._initial_terms(vals["u"], self._exact(t))
        gap = np.sum(self.grid.sq_norm(vals["dg"] - vals["u"]))
        self.gap_max = max(self.gap_max, float(gap))

    def _initial_terms(self, uhat, u0):
        init = {"L2": float(np.sqrt(np.sum(self.grid.sq_norm(uhat - u0))))}
        ent = self.problem.entropy
        if ent:
            tau0, tauh = u0[0], uhat[0]
            rel = ent["W"](tau0) - ent["W"](tauh) - ent["dW"](tauh) * (tau0 - tauh)
            init["rel_entropy_L1"] = float(self.grid.integral(np.abs(rel)))
            init["v_L2"] = float(np.sqrt(np.sum(self.grid.sq_norm(uhat[1:] - u0[1:]))))
        self.init = init

    def _sample_states(self, vals):
        u = vals["u"]
        self.state_min = np.minimum(self.state_min, u.reshape(self.m, -1).min(axis=1))
        self.state_max = np.maximum(self.state_max, u.reshape(self.m, -1).max(axis=1))
        gx, gy = vals["ux"], vals["uy"]
        self.sup_grad = np.maximum(self.sup_grad, [np.abs(gx).max(), np.abs(gy).max()])
        self.sup_grad_norm = max(self.sup_grad_norm,
                                 float(np.sqrt((gx ** 2 + gy ** 2).sum(axis=0)).max()))
        if self.problem.estimator == "psystem":
            self.sup_div_v = max(self.sup_div_v, float(np.abs(gx[1] + gy[2]).max()))

    def _slab(self, n):
        p = self.p
        start = max(0, n - p)
        idx = list(range(start, start + p + 2))
        t0, t1 = self.times[n], self.times[n + 1]
        tau = t1 - t0
        tq = t0 + tau * self.tg
        nodes = np.array([self.times[j] for j in idx])
        a0, b0 = hermite_weights(nodes, tq, 0)
        a1, b1 = hermite_weights(nodes, tq, 1)
        # weights per ring-buffer slot
        S = self.slots
        W0 = np.zeros((tq.size, 2 * S))
        W1 = np.zeros((tq.size, 2 * S))
        for c, j in enumerate(idx):
            W0[:, j % S], W0[:, S + j % S] = a0[:, c], b0[:, c]
            W1[:, j % S], W1[:, S + j % S] = a1[:, c], b1[:, c]
        flat = self.buf.reshape(2 * S, -1)
        np.matmul(W0, flat, out=self.V)
        V = self.V.reshape((tq.size,) + self.buf.shape[1:])
        ut_all = (W1 @ flat[:, :self.V.shape[1] // len(self.kinds)]).reshape(
            (tq.size,) + self.buf.shape[2:])
        r1_slab = 0.0
        pr = self.problem
        psys = pr.estimator == "psystem"
        for g in range(tq.size):
            t = tq[g]
            wt = tau * self.wg[g]
            vals = {name: V[g, i] for i, name in enumerate(self.kinds)}
            u = vals["u"]
            grad = np.stack([vals["ux"], vals["uy"]])
            aux_grad = aux_hess = None
            if self.eps > 0:
                aux_grad = [vals["ax"], vals["ay"]]
                aux_hess = {pr_: vals[f"h{pr_[0]}{pr_[1]}"] for pr_ in self.pairs}
            parts = residual_parts(pr, self.eps, u, ut_all[g], grad, aux_grad, aux_hess,
                                   self._source(t))
            r1 = parts["r1"]
            r1n = float(np.sqrt(np.sum(self.grid.sq_norm(r1))))
            r1_slab += wt * r1n
            self._sample_states(vals)
            if psys:
                W2 = pr.entropy["d2W"](u[0])
                self.s["ru"] += wt * float(np.sqrt(self.grid.sq_norm(W2 * r1[0])))
                self.s["rv"] += wt * float(np.sqrt(np.sum(self.grid.sq_norm(r1[1:]))))
            if "gap" in parts:
                gap2 = self.grid.sq_norm(parts["gap"])  # (d, m)
                self.s["er2"] += wt * float(gap2.sum())
                self.s["er2v"] += wt * float(gap2[:, 1:].sum())
            gap = np.sum(self.grid.sq_norm(vals["dg"] - u))
            self.gap_max = max(self.gap_max, float(gap))
            if self.exact is not None:
                ex = self._exact(t)
                self.s["dg"] += wt * float(np.sum(self.grid.sq_norm(vals["dg"] - ex)))
                e2 = self.grid.sq_norm(u - ex)
                self.err_max = np.maximum(self.err_max, e2)
                self.err_max_total = max(self.err_max_total, float(e2.sum()))
                self.err_v_max = max(self.err_v_max, float(e2[1:].sum()))
                eg = self._exact(t, "grad")
                h1 = self.grid.sq_norm(grad - eg)  # (d, m)
                self.s["h1"] += wt * float(h1.sum())
                self.s["h1v"] += wt * float(h1[:, 1:].sum())
        self.s["r1"] += r1_slab
        self.r1_slabs.append(r1_slab)

    def report(self):
        if self.n_nodes < self.p + 2:
            raise ConfigurationError(
                f"history depth {self.p} needs at least {self.p + 1} time steps")
        has_ex = self.exact is not None
        diff = self.eps > 0
        psys = self.problem.estimator == "psystem"
        h1 = self.s["h1v"] if psys else self.s["h1"]
        return NormReport(
            r1_L1L2=float(self.s["r1"]),
            err_dg_L2L2=float(np.sqrt(self.s["dg"])) if has_ex else None,
            err_LinfL2=float(np.sqrt(self.err_max_total)) if has_ex else None,
            err_L2H1=float(np.sqrt(h1)) if (has_ex and diff) else None,
            E_r2=float(np.sqrt(self.s["er2"])) if diff else None,
            recon_gap_LinfL2=float(np.sqrt(self.gap_max)),
            init_L2=self.init["L2"] if self.init else None,
            err_LinfL2_components=np.sqrt(self.err_max).tolist() if has_ex else None,
            sup_grad=self.sup_grad.tolist(),
            sup_grad_norm=float(self.sup_grad_norm),
            sup_div_v=float(self.sup_div_v) if psys else None,
            state_min=self.state_min.tolist(),
            state_max=self.state_max.tolist(),
            r_u_weighted_L1L2=float(self.s["ru"]) if psys else None,
            r_v1_L1L2=float(self.s["rv"]) if psys else None,
            E_r2_v=float(np.sqrt(self.s["er2v"])) if (psys and diff) else None,
            init_relative_entropy_L1=(self.init or {}).get("rel_entropy_L1"),
            init_v_L2=(self.init or {}).get("v_L2"),
            err_v_L2H1=float(np.sqrt(self.s["h1v"])) if (psys and has_ex and diff) else None,
            err_v_LinfL2=float(np.sqrt(self.err_v_max)) if (psys and has_ex) else None,
            r1_per_slab=[float(v) for v in self.r1_slabs],
            n_slabs=len(self.r1_slabs),
        )
