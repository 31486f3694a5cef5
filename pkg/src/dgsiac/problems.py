"""Model problems on the flat two-torus with manufactured exact solutions.

State arrays carry the component axis first, ``u.shape == (m, *S)``.  Fluxes
come back as ``(d, m, *S)``, Jacobians as ``(d, m, m, *S)`` and the diffusion
tensor as ``(d, d, m, m, *S)`` (broadcastable in ``S`` when constant).
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "TrigProduct", "ExactSolution", "ProblemDefinition",
    "make_linear_advection_diffusion", "make_viscous_burgers",
    "make_diffusive_p_system", "PROBLEMS", "get_problem",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TrigProduct:
    """``offset + amp * exp(decay t) * F(2 pi (x - cx t)) * G(2 pi (y - cy t))``.

    ``F`` and ``G`` are ``"sin"`` or ``"cos"``.  All derivatives up to second
    order in space and first order in time are available in closed form.
    """

    offset: float
    amp: float
    fx: str
    fy: str
    cx: float
    cy: float
    decay: float = 0.0

    @staticmethod
    def _f(kind, z, n):
        # n-th derivative of sin/cos in z
        shift = n % 4
        if kind == "sin":
            return [np.sin, np.cos, lambda s: -np.sin(s), lambda s: -np.cos(s)][shift](z)
        return [np.cos, lambda s: -np.sin(s), lambda s: -np.cos(s), np.sin][shift](z)

    def _parts(self, t, x, y, nx, ny):
        zx = TWO_PI * (x - self.cx * t)
        zy = TWO_PI * (y - self.cy * t)
        fx = self._f(self.fx, zx, nx) * TWO_PI ** nx
        fy = self._f(self.fy, zy, ny) * TWO_PI ** ny
        return self.amp * np.exp(self.decay * t) * fx * fy

    def value(self, t, x, y):
        return self.offset + self._parts(t, x, y, 0, 0)

    def dx(self, t, x, y, n=1):
        return self._parts(t, x, y, n, 0)

    def dy(self, t, x, y, n=1):
        return self._parts(t, x, y, 0, n)

    def dxdy(self, t, x, y):
        return self._parts(t, x, y, 1, 1)

    def dt(self, t, x, y):
        return (self.decay * self._parts(t, x, y, 0, 0)
                - self.cx * self._parts(t, x, y, 1, 0)
                - self.cy * self._parts(t, x, y, 0, 1))


@dataclass(frozen=True)
class ExactSolution:
    """Vector of :class:`TrigProduct` components on the two-torus."""

    components: tuple

    def _stack(self, vals, x, y):
        shape = np.broadcast(x, y).shape
        return np.stack([np.broadcast_to(v, shape) for v in vals])

    def value(self, t, x):
        x, y = x
        return self._stack([c.value(t, x, y) for c in self.components], x, y)

    def dt(self, t, x):
        x, y = x
        return self._stack([c.dt(t, x, y) for c in self.components], x, y)

    def grad(self, t, x):
        x, y = x
        return np.stack([self._stack([c.dx(t, x, y) for c in self.components], x, y),
                         self._stack([c.dy(t, x, y) for c in self.components], x, y)])

    def hess(self, t, x):
        x, y = x
        xx = self._stack([c.dx(t, x, y, 2) for c in self.components], x, y)
        xy = self._stack([c.dxdy(t, x, y) for c in self.components], x, y)
        yy = self._stack([c.dy(t, x, y, 2) for c in self.components], x, y)
        return np.stack([np.stack([xx, xy]), np.stack([xy, yy])])


@dataclass
class ProblemDefinition:
    """Convection-diffusion system with everything the pipeline needs.

    ``diffusion`` returns the tensor ``A_{alpha beta}`` for a state; when
    ``diffusion_is_constant`` is true ``diffusion_jacobian`` may be ``None``.
    ``source`` evaluates the manufactured source at ``(t, x)`` with the
    ``eps`` it was built for being supplied at call time.
    """

    name: str
    m: int
    d: int
    flux: Callable
    flux_jacobian: Callable
    wave_speed: Callable
    diffusion: Callable
    lambda_max: float
    final_time: float
    estimator: str
    diffusion_is_constant: bool = True
    diffusion_jacobian: Optional[Callable] = None
    admissible: Optional[Callable] = None
    exact: Optional[ExactSolution] = None
    has_source: bool = False
    box: Optional[tuple] = None
    flux_second_bound: Optional[tuple] = None
    diffusion_derivative_bound: float = 0.0
    entropy: dict = field(default_factory=dict)
    diffusive_components: Optional[tuple] = None

    def is_admissible(self, u):
        if self.admissible is None:
            return np.ones(u.shape, dtype=bool)
        return self.admissible(u)

    def diffusion_divergence_jacobian(self, u):
        if self.diffusion_jacobian is None:
            return None
        return self.diffusion_jacobian(u)

    def source(self, t, x, eps):
        """Manufactured source ``s = u_t + div f(u) - eps div(A grad u)``."""
        if not self.has_source or self.exact is None:
            return None
        u = self.exact.value(t, x)
        ut = self.exact.dt(t, x)
        g = self.exact.grad(t, x)
        jac = self.flux_jacobian(u)
        s = ut + np.einsum("aij...,aj...->i...", jac, g)
        if eps:
            s = s - eps * diffusion_divergence(self, u, g, self.exact.hess(t, x))
        return s


def diffusion_divergence(problem, u, grad, hess):
    """``sum_{alpha beta} d_alpha (A_{alpha beta}(u) d_beta u)`` from derivatives."""
    A = problem.diffusion(u)
    out = np.einsum("abij...,abj...->i...", A, hess)
    dA = problem.diffusion_divergence_jacobian(u)
    if dA is not None:
        # d_alpha A = sum_k dA/du_k d_alpha u_k
        out = out + np.einsum("abijk...,ak...,bj...->i...", dA, grad, grad)
    return out


def _identity_diffusion(m, d, mask=None):
    diag = np.ones(m) if mask is None else np.asarray(mask, dtype=float)
    tensor = np.zeros((d, d, m, m))
    for a in range(d):
        tensor[a, a] = np.diag(diag)
    return tensor


def _constant_diffusion(tensor):
    def diffusion(u):
        extra = (1,) * (np.ndim(u) - 1)
        return tensor.reshape(tensor.shape + extra)
    return diffusion


def make_linear_advection_diffusion(velocity=(1.0, 0.5)):
    """Linear advection-diffusion ``u_t + div(a u) = eps lap u``.

    With the default two-dimensional velocity the exact solution is the
    decaying travelling wave used for the convergence tables; other
    velocities give a problem without exact solution (useful in 1D tests).
    """
    a = np.asarray(velocity, dtype=float)
    d = a.size

    def flux(u):
        return a.reshape((d, 1) + (1,) * (u.ndim - 1)) * u[None]

    def jac(u):
        return np.broadcast_to(a.reshape((d, 1, 1) + (1,) * (u.ndim - 1)),
                               (d, 1, 1) + u.shape[1:])

    def wave_speed(u, n):
        return np.full(u.shape[1:], abs(float(np.dot(a, n))))

    exact = None
    if d == 2:
        exact = _LinadvExact(a)
    return ProblemDefinition(
        name="linadv", m=1, d=d, flux=flux, flux_jacobian=jac,
        wave_speed=wave_speed, diffusion=_constant_diffusion(_identity_diffusion(1, d)),
        lambda_max=float(np.max(np.abs(a))), final_time=1.0, estimator="linear",
        exact=exact, flux_second_bound=(0.0,) * d,
    )


class _LinadvExact(ExactSolution):
    """Exact solution whose decay rate depends on the viscosity."""

    def __init__(self, a):
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "components", (self._mode(0.0),))

    def _mode(self, eps):
        return TrigProduct(0.0, 1.0, "sin", "cos", self.a[0], self.a[1],
                           decay=-8.0 * eps * np.pi ** 2)

    def with_eps(self, eps):
        out = _LinadvExact(self.a)
        object.__setattr__(out, "components", (self._mode(eps),))
        return out


def make_viscous_burgers():
    """Two-dimensional viscous Burgers equation with manufactured source."""
    d = 2

    def flux(u):
        f = 0.5 * u * u
        return np.stack([f, f])

    def jac(u):
        return np.stack([u[None], u[None]])

    def wave_speed(u, n):
        return np.abs(u[0]) * abs(float(n[0] + n[1]))

    exact = ExactSolution((TrigProduct(2.0, 0.2, "sin", "cos", 0.7, -0.4),))
    return ProblemDefinition(
        name="burgers", m=1, d=d, flux=flux, flux_jacobian=jac,
        wave_speed=wave_speed, diffusion=_constant_diffusion(_identity_diffusion(1, d)),
        lambda_max=2.2, final_time=0.1, estimator="nonlinear_scalar",
        exact=exact, has_source=True, box=((1.8, 2.2),),
        flux_second_bound=(1.0, 1.0),
    )


def pressure(tau):
    return tau ** -2.0


def pressure_prime(tau):
    return -2.0 * tau ** -3.0


def make_diffusive_p_system():
    """Diffusive p-system for ``(tau, v1, v2)`` with ``p(tau) = tau**-2``."""
    d, m = 2, 3

    def flux(u):
        tau, v1, v2 = u
        p = pressure(tau)
        zero = np.zeros_like(tau)
        return np.stack([np.stack([-v1, p, zero]), np.stack([-v2, zero, p])])

    def jac(u):
        tau = u[0]
        pp = pressure_prime(tau)
        z = np.zeros_like(tau)
        o = np.ones_like(tau)
        jx = np.stack([np.stack([z, -o, z]), np.stack([pp, z, z]), np.stack([z, z, z])])
        jy = np.stack([np.stack([z, z, -o]), np.stack([z, z, z]), np.stack([pp, z, z])])
        return np.stack([jx, jy])

    def wave_speed(u, n):
        return np.sqrt(-pressure_prime(u[0])) * float(np.hypot(n[0], n[1]))

    def admissible(u):
        ok = np.ones(u.shape, dtype=bool)
        ok[0] = u[0] > 0
        return ok

    exact = ExactSolution((
        TrigProduct(1.0, 0.1, "sin", "cos", 0.3, -0.2),
        TrigProduct(0.0, 0.2, "cos", "cos", 0.3, -0.2),
        TrigProduct(0.0, -0.15, "sin", "sin", 0.3, -0.2),
    ))
    entropy = {
        "W": lambda tau: 1.0 / tau,
        "dW": lambda tau: -pressure(tau),
        "d2W": lambda tau: 2.0 * tau ** -3.0,
        "d3W": lambda tau: -6.0 * tau ** -4.0,
    }
    return ProblemDefinition(
        name="psystem", m=m, d=d, flux=flux, flux_jacobian=jac,
        wave_speed=wave_speed,
        diffusion=_constant_diffusion(_identity_diffusion(m, d, mask=(0, 1, 1))),
        lambda_max=float(np.sqrt(2.0) * 0.9 ** -1.5), final_time=0.05,
        estimator="psystem", admissible=admissible, exact=exact,
        has_source=True, box=((0.9, 1.1), (-0.2, 0.2), (-0.15, 0.15)),
        entropy=entropy, diffusive_components=(1, 2),
    )


PROBLEMS = {
    "linadv": make_linear_advection_diffusion,
    "burgers": make_viscous_burgers,
    "psystem": make_diffusive_p_system,
}


def get_problem(name):
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None


def exact_for(problem, eps):
    """Exact solution for a given viscosity (only linadv depends on it)."""
    ex = problem.exact
    if ex is not None and hasattr(ex, "with_eps"):
        return ex.with_eps(eps)
    return ex
