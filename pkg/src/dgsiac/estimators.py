"""Relative-entropy a posteriori bounds assembled from the residual norms.

Three bounds are provided, one per problem class:

* linear scalar:      ``2 e0^2 + 4 R1^2 + 2 eps E^2``
* nonlinear scalar:   ``(4 e0^2 + 16 R1^2 + 8 eps E^2) exp(2 Lambda t)``
* diffusive p-system: ``(16/3 W0 + 8/3 v0^2 + 16/(3 c_W) Ru^2 + 16/3 Rv^2
  + 16/3 eps Ev^2) exp(Lambda t)``

with ``e0`` the initial error, ``R1 = ||r1||_{L1 L2}``, ``E`` the computable
bound on ``||r2||_{L2 H^-1}`` and ``W0`` the initial relative entropy.  The
bounds are compared with the measured left-hand side to obtain a
reliability ratio.
"""
import json
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, InadmissibleStateError
from .problems import ProblemDefinition, exact_for, get_problem
from .residual import NormAccumulator, NormReport
from .timestepping import iterate_trajectory

__all__ = [
    "StabilityConstants", "EstimatorReport", "inflate_box", "entropy_constants",
    "compute_lambda", "bound_linear_scalar", "bound_nonlinear_scalar", "bound_p_system",
    "relative_entropy", "measured_lhs", "assemble", "run_estimate",
]

BOX_MARGIN = 0.05


@dataclass
class StabilityConstants:
    """Constants entering the bounds.

    ``box`` is the (inflated) admissible box used for ``c_W``, ``C_W`` and
    the flux curvature bounds.
    """

    Lambda: float = 0.0
    c_W: Optional[float] = None
    C_W: Optional[float] = None
    box: Optional[list] = None
    flux_second_bound: Optional[list] = None
    diffusion_derivative_bound: float = 0.0

    def __post_init__(self):
        if not self.Lambda >= 0:
            raise ValueError(f"growth exponent must be non-negative, got {self.Lambda}")
        if self.c_W is not None and not self.c_W > 0:
            raise ValueError(f"c_W must be positive on the admissible box, got {self.c_W}")


@dataclass
class EstimatorReport:
    """Norms, constants, bound and measured error of one run."""

    problem: str
    q: int
    N: int
    eps: float
    T: float
    norms: NormReport
    constants: StabilityConstants
    bound: float
    lhs: Optional[float]
    ratio: Optional[float]
    warnings: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def reliable(self):
        """``True`` when the bound dominates the measured error (``None`` if unknown)."""
        if self.lhs is None:
            return None
        return bool(self.bound >= self.lhs)

    def to_dict(self):
        out = asdict(self)
        out["reliable"] = self.reliable
        return out

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


# ---------------------------------------------------------------------------
# constants

def inflate_box(box, margin=BOX_MARGIN):
    """Widen every interval by ``margin`` times its width on each side."""
    out = []
    for lo, hi in box:
        pad = margin * (hi - lo)
        out.append((lo - pad, hi + pad))
    return out


def entropy_constants(problem, box=None, n_samples=2001):
    """``c_W = min W''`` and ``C_W = max |W'''|`` over the ``tau`` interval.

    The extrema are taken over a sample that includes both endpoints.
    ``box`` defaults to the problem box inflated by :data:`BOX_MARGIN`.
    """
    ent = problem.entropy
    if not ent:
        raise ConfigurationError(f"problem {problem.name!r} carries no entropy data")
    lo, hi = (box or inflate_box(problem.box))[0]
    if lo <= 0:
        raise InadmissibleStateError(f"tau interval [{lo}, {hi}] leaves the positive axis",
                                     component=0)
    z = np.linspace(lo, hi, n_samples)
    return float(np.min(ent["d2W"](z))), float(np.max(np.abs(ent["d3W"](z))))


def relative_entropy(problem, a, b):
    """``W(a | b) = W(a) - W(b) - W'(b)(a - b)``."""
    ent = problem.entropy
    return ent["W"](a) - ent["W"](b) - ent["dW"](b) * (a - b)


def compute_lambda(problem, norms, eps, c_W=None, C_W=None):
    """Growth exponent from sampled sup-norms of reconstruction derivatives.

    ``norms`` needs ``sup_grad`` (per axis), ``sup_grad_norm`` and, for the
    p-system, ``sup_div_v``.
    """
    kind = problem.estimator
    if kind == "linear":
        return 0.0
    if kind == "nonlinear_scalar":
        f2 = problem.flux_second_bound or (0.0,) * problem.d
        lam = 2.0 * sum(float(c) * float(g) for c, g in zip(f2, norms.sup_grad))
        dA = problem.diffusion_derivative_bound
        lam += 2.0 * float(eps) * dA ** 2 * float(norms.sup_grad_norm) ** 2
        return lam
    if kind == "psystem":
        if c_W is None or C_W is None:
            c_W, C_W = entropy_constants(problem)
        return 2.0 * C_W / c_W * float(norms.sup_div_v)
    raise ConfigurationError(f"unknown estimator kind {kind!r}")


# ---------------------------------------------------------------------------
# bounds

def _eps_term(eps, E):
    return 0.0 if not eps else float(eps) * float(E) ** 2


def bound_linear_scalar(r1, init, E_r2=None, eps=0.0):
    """``2 init^2 + 4 r1^2 + 2 eps E_r2^2``."""
    return 2.0 * init ** 2 + 4.0 * r1 ** 2 + 2.0 * _eps_term(eps, E_r2)


def bound_nonlinear_scalar(r1, init, E_r2=None, eps=0.0, Lambda=0.0, t=0.0):
    """``(4 init^2 + 16 r1^2 + 8 eps E_r2^2) exp(2 Lambda t)``."""
    base = 4.0 * init ** 2 + 16.0 * r1 ** 2 + 8.0 * _eps_term(eps, E_r2)
    return base * float(np.exp(2.0 * Lambda * t))


def bound_p_system(rel_entropy0, v0, r_u, r_v1, E_r2_v=None, eps=0.0, c_W=1.0, Lambda=0.0,
                   t=0.0):
    """p-system bound.

    Parameters
    ----------
    rel_entropy0 : float
        ``||W(tau_0 | tau_hat(0))||_{L1}``.
    v0 : float
        ``||v_0 - v_hat(0)||_{L2}``.
    r_u : float
        ``||W''(tau_hat) r_u||_{L1 L2}``.
    r_v1 : float
        ``||r_v||_{L1 L2}`` over the velocity rows of ``r1``.
    E_r2_v : float
        Flux-gap bound restricted to the velocity rows.
    """
    base = (16.0 / 3.0 * rel_entropy0 + 8.0 / 3.0 * v0 ** 2
            + 16.0 / (3.0 * c_W) * r_u ** 2 + 16.0 / 3.0 * r_v1 ** 2
            + 16.0 / 3.0 * _eps_term(eps, E_r2_v))
    return base * float(np.exp(Lambda * t))


def measured_lhs(problem, norms, eps, c_W=None):
    """Left-hand side of the bound from the measured errors (``None`` without them)."""
    if norms.err_LinfL2 is None:
        return None
    diff = bool(eps)
    if problem.estimator == "psystem":
        tau_err = norms.err_LinfL2_components[0]
        out = c_W * tau_err ** 2 + norms.err_v_LinfL2 ** 2
        if diff:
            out += eps * norms.err_v_L2H1 ** 2
        return float(out)
    out = norms.err_LinfL2 ** 2
    if diff:
        out += eps * norms.err_L2H1 ** 2
    return float(out)


def _box_warnings(problem, norms, box):
    warn = []
    for c, (lo, hi) in enumerate(box):
        smin, smax = norms.state_min[c], norms.state_max[c]
        if smin < lo or smax > hi:
            warn.append(f"component {c} sampled in [{smin:.6g}, {smax:.6g}] leaves the "
                        f"admissible box [{lo:.6g}, {hi:.6g}]; bound not certified")
    return warn


def assemble(problem, norms, q, N, eps, T, margin=BOX_MARGIN, meta=None):
    """Turn a :class:`NormReport` into an :class:`EstimatorReport`."""
    kind = problem.estimator
    warnings = []
    box = inflate_box(problem.box, margin) if problem.box else None
    if box:
        warnings += _box_warnings(problem, norms, box)
    c_W = C_W = None
    if kind == "psystem":
        if norms.state_min[0] <= 0:
            raise InadmissibleStateError(
                f"specific volume reached {norms.state_min[0]:.6g} <= 0", component=0)
        c_W, C_W = entropy_constants(problem, box)
    Lam = compute_lambda(problem, norms, eps, c_W, C_W)
    consts = StabilityConstants(
        Lambda=Lam, c_W=c_W, C_W=C_W, box=box,
        flux_second_bound=list(problem.flux_second_bound) if problem.flux_second_bound else None,
        diffusion_derivative_bound=problem.diffusion_derivative_bound)
    if norms.init_L2 is None:
        raise ConfigurationError("the bound needs the initial error term")
    if kind == "linear":
        bound = bound_linear_scalar(norms.r1_L1L2, norms.init_L2, norms.E_r2, eps)
    elif kind == "nonlinear_scalar":
        bound = bound_nonlinear_scalar(norms.r1_L1L2, norms.init_L2, norms.E_r2, eps, Lam, T)
    elif kind == "psystem":
        bound = bound_p_system(norms.init_relative_entropy_L1, norms.init_v_L2,
                               norms.r_u_weighted_L1L2, norms.r_v1_L1L2, norms.E_r2_v, eps,
                               c_W, Lam, T)
    else:
        raise ConfigurationError(f"unknown estimator kind {kind!r}")
    if eps:
        warnings.append("the H^-1 norm of r2 is replaced by its computable upper bound E_r2")
    lhs = measured_lhs(problem, norms, eps, c_W)
    ratio = None
    if lhs is not None:
        ratio = float(bound / lhs) if lhs > 0 else float("inf")
    if not np.isfinite(bound):
        warnings.append("bound is not finite")
    return EstimatorReport(problem=problem.name, q=int(q), N=int(N), eps=float(eps), T=float(T),
                           norms=norms, constants=consts, bound=float(bound), lhs=lhs,
                           ratio=ratio, warnings=warnings, meta=dict(meta or {}))


def run_estimate(problem, q, N, eps=0.0, T=None, C_adv=0.1, penalty=None, n_space=None,
                 n_time=None, margin=BOX_MARGIN, progress=None):
    """Solve, reconstruct, accumulate the norms and assemble the bound.

    Parameters
    ----------
    problem : str or ProblemDefinition
    progress : callable, optional
        Called as ``progress(step, n_steps)`` after every time step.
    """
    if not isinstance(problem, ProblemDefinition):
        problem = get_problem(problem)
    if q < 1:
        raise ConfigurationError("the reconstruction needs q >= 1")
    if eps < 0:
        raise ConfigurationError(f"eps must be non-negative, got {eps}")
    start = time.perf_counter()
    it = iterate_trajectory(problem, q, N, eps, T, C_adv, penalty=penalty)
    info = next(it)
    acc = NormAccumulator(problem, info["mesh"], q, eps, exact_for(problem, eps),
                          n_space=n_space, n_time=n_time)
    for k, (t, x, w) in enumerate(it):
        acc.push(t, x, w)
        if progress is not None:
            progress(k, info["n_steps"])
    norms = acc.report()
    meta = {"dt": info["dt"], "n_steps": info["n_steps"], "tableau": info["tableau"],
            "C_adv": C_adv, "runtime_s": time.perf_counter() - start}
    return assemble(problem, norms, q, N, eps, info["T"], margin, meta)
