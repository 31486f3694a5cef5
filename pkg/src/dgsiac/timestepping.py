"""IMEX additive Runge-Kutta time stepping of the semidiscrete system.

Convection and the manufactured source are treated explicitly, constant
coefficient diffusion implicitly.  Stage values satisfy

    U_i = u^n + tau sum_{j<i} at_ij (-f_h(U_j) + s_j) + tau sum_{j<=i} a_ij eps A_h U_j

and the update uses the two weight vectors ``bt`` and ``b``.  Every accepted
node records the value and the nodal time derivative
``w^n = -f_h(u^n) + eps A_h(u^n) + s(t_n)``, the data of the Hermite
reconstruction.
"""
from dataclasses import dataclass, field
from fractions import Fraction as F
from math import ceil
import json
import os

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConfigurationError, SolverError
from .mesh import CartesianMesh, DgField, l2_project, save_field
from .operators import PenaltyConfig, assemble_linear_diffusion, convective_apply, project_source
from .problems import exact_for

__all__ = [
    "ButcherPair", "ARK3", "ARK5", "tableau_for", "StageSolver", "SemiDiscreteOperator",
    "imex_step", "time_step", "time_grid", "TrajectoryRecord", "iterate_trajectory",
    "run_trajectory", "write_checkpoint",
]


@dataclass(frozen=True)
class ButcherPair:
    """Explicit/implicit tableau pair of an additive Runge-Kutta method.

    Entries are given as exact rationals and frozen to floats on construction.
    """

    name: str
    explicit: tuple
    implicit: tuple
    b_explicit: tuple
    b_implicit: tuple
    c: tuple
    order: int
    A_exp: np.ndarray = field(init=False, repr=False)
    A_imp: np.ndarray = field(init=False, repr=False)
    bt: np.ndarray = field(init=False, repr=False)
    b: np.ndarray = field(init=False, repr=False)
    c_exp: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)
        set_("A_exp", np.array([[float(x) for x in row] for row in self.explicit]))
        set_("A_imp", np.array([[float(x) for x in row] for row in self.implicit]))
        set_("bt", np.array([float(x) for x in self.b_explicit]))
        set_("b", np.array([float(x) for x in self.b_implicit]))
        set_("c_exp", np.array([float(x) for x in self.c]))
        s = self.stages
        if self.A_exp.shape != (s, s) or self.A_imp.shape != (s, s):
            raise ConfigurationError("tableau matrices must be square with one row per stage")
        if np.any(np.triu(self.A_exp) != 0):
            raise ConfigurationError("explicit tableau must be strictly lower triangular")
        if np.any(np.triu(self.A_imp, 1) != 0):
            raise ConfigurationError("implicit tableau must be lower triangular")
        for bw in (self.b_explicit, self.b_implicit):
            if abs(float(sum(bw)) - 1.0) > 1e-9:
                raise ConfigurationError(f"weights of {self.name} do not sum to one")

    @property
    def stages(self):
        return len(self.c)

    def stability_function(self, z):
        """``R(z) = 1 + z b^T (I - z A)^{-1} 1`` of the implicit tableau."""
        s = self.stages
        return 1.0 + z * self.b @ np.linalg.solve(np.eye(s) - z * self.A_imp, np.ones(s))


def _lower(entries, s):
    rows = [[F(0)] * s for _ in range(s)]
    for (i, j), v in entries.items():
        rows[i][j] = F(v)
    return tuple(tuple(r) for r in rows)


_G3 = F(1767732205903, 4055673282236)
_B3 = (F(1471266399579, 7840856788654), F(-4482444167858, 7529755066697),
       F(11266239266428, 11593286722821), _G3)

ARK3 = ButcherPair(
    name="ARK3(2)4L[2]SA",
    explicit=_lower({
        (1, 0): F(1767732205903, 2027836641118),
        (2, 0): F(5535828885825, 10492691773637), (2, 1): F(788022342437, 10882634858940),
        (3, 0): F(6485989280629, 16251701735622), (3, 1): F(-4246266847089, 9704473918619),
        (3, 2): F(10755448449292, 10357097424841),
    }, 4),
    implicit=_lower({
        (1, 0): _G3, (1, 1): _G3,
        (2, 0): F(2746238789719, 10658868560708), (2, 1): F(-640167445237, 6845629431997),
        (2, 2): _G3,
        (3, 0): _B3[0], (3, 1): _B3[1], (3, 2): _B3[2], (3, 3): _G3,
    }, 4),
    b_explicit=_B3, b_implicit=_B3,
    c=(F(0), F(1767732205903, 2027836641118), F(3, 5), F(1)),
    order=3,
)

_G5 = F(41, 200)
_B5 = (F(-872700587467, 9133579230613), F(0), F(0), F(22348218063261, 9555858737531),
       F(-1143369518992, 8141816002931), F(-39379526789629, 19018526304540),
       F(32727382324388, 42900044865799), _G5)

ARK5 = ButcherPair(
    name="ARK5(4)8L[2]SA",
    explicit=_lower({
        (1, 0): F(41, 100),
        (2, 0): F(367902744464, 2072280473677), (2, 1): F(677623207551, 8224143866563),
        (3, 0): F(1268023523408, 10340822734521), (3, 2): F(1029933939417, 13636558850479),
        (4, 0): F(14463281900351, 6315353703477), (4, 2): F(66114435211212, 5879490589093),
        (4, 3): F(-54053170152839, 4284798021562),
        (5, 0): F(14090043504691, 34967701212078), (5, 2): F(15191511035443, 11219624916014),
        (5, 3): F(-18461159152457, 12425892160975), (5, 4): F(-281667163811, 9011619295870),
        (6, 0): F(19230459214898, 13134317526959), (6, 2): F(21275331358303, 2942455364971),
        (6, 3): F(-38145345988419, 4862620318723), (6, 4): F(-1, 8), (6, 5): F(-1, 8),
        (7, 0): F(-19977161125411, 11928030595625), (7, 2): F(-40795976796054, 6384907823539),
        (7, 3): F(177454434618887, 12078138498510), (7, 4): F(782672205425, 8267701900261),
        (7, 5): F(-69563011059811, 9646580694205), (7, 6): F(7356628210526, 4942186776405),
    }, 8),
    implicit=_lower({
        (1, 0): _G5, (1, 1): _G5,
        (2, 0): F(41, 400), (2, 1): F(-567603406766, 11931857230679), (2, 2): _G5,
        (3, 0): F(683785636431, 9252920307686), (3, 2): F(-110385047103, 1367015193373),
        (3, 3): _G5,
        (4, 0): F(3016520224154, 10081342136671), (4, 2): F(30586259806659, 12414158314087),
        (4, 3): F(-22760509404356, 11113319521817), (4, 4): _G5,
        (5, 0): F(218866479029, 1489978393911), (5, 2): F(638256894668, 5436446318841),
        (5, 3): F(-1179710474555, 5321154724896), (5, 4): F(-60928119172, 8023461067671),
        (5, 5): _G5,
        (6, 0): F(1020004230633, 5715676835656), (6, 2): F(25762820946817, 25263940353407),
        (6, 3): F(-2161375909145, 9755907335909), (6, 4): F(-211217309593, 5846859502534),
        (6, 5): F(-4269925059573, 7827059040749), (6, 6): _G5,
        **{(7, j): _B5[j] for j in range(8)},
    }, 8),
    b_explicit=_B5, b_implicit=_B5,
    c=(F(0), F(41, 100), F(2935347310677, 11292855782101), F(1426016391358, 7196633302097),
       F(92, 100), F(24, 100), F(3, 5), F(1)),
    order=5,
)

TABLEAUX = {"ARK3": ARK3, "ARK5": ARK5, ARK3.name: ARK3, ARK5.name: ARK5}


def tableau_for(q):
    """Third-order pair for ``q = 1``, fifth-order pair for ``q >= 2``."""
    return ARK3 if q <= 1 else ARK5


class StageSolver:
    """Direct solver for ``(I - theta L) x = rhs`` with cached factorizations."""

    def __init__(self, L, rtol=1e-12):
        self.L = sp.csc_matrix(L)
        self.rtol = rtol
        self._cache = {}

    def apply(self, x):
        return self.L @ x

    def _factor(self, theta):
        lu = self._cache.get(theta)
        if lu is None:
            n = self.L.shape[0]
            lu = splu((sp.identity(n, format="csc") - theta * self.L).tocsc())
            self._cache = {theta: lu} if len(self._cache) > 4 else {**self._cache, theta: lu}
        return lu

    def solve(self, theta, rhs):
        lu = self._factor(theta)
        x = lu.solve(rhs)
        res = rhs - (x - theta * (self.L @ x))
        scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
        rel = np.linalg.norm(res) / scale
        if rel > self.rtol:
            # one step of iterative refinement before giving up
            x = x + lu.solve(res)
            res = rhs - (x - theta * (self.L @ x))
            rel = np.linalg.norm(res) / scale
            if rel > self.rtol:
                raise SolverError(f"stage solve residual {rel:.3e} above {self.rtol:.1e}",
                                  residual=rel, iterations=2)
        return x


class SemiDiscreteOperator:
    """Right-hand side pieces of ``d/dt u_h = -f_h(u_h) + eps A_h(u_h) + s_h``.

    Works on raveled coefficient vectors.  The diffusion part is assembled
    once as a sparse matrix (state-independent diffusion only).
    """

    def __init__(self, problem, mesh, degree, eps=0.0, penalty=None, n_quad=None):
        if eps < 0:
            raise ConfigurationError("the viscosity must be non-negative")
        self.problem, self.mesh, self.degree = problem, mesh, degree
        self.eps = float(eps)
        self.m = problem.m
        self.n_quad = n_quad
        self.shape = (problem.m,) + mesh.shape + (degree + 1,) * mesh.dim
        self.solver = None
        if self.eps > 0:
            if degree < 1:
                raise ConfigurationError("diffusion needs polynomial degree q >= 1")
            L = assemble_linear_diffusion(mesh, degree, problem, penalty=penalty or PenaltyConfig())
            self.solver = StageSolver(self.eps * L)

    def field(self, x):
        return DgField(self.mesh, self.degree, self.m, x.reshape(self.shape))

    def explicit(self, x, t):
        out = -convective_apply(self.field(x), self.problem, self.n_quad).coeffs.ravel()
        s = project_source(self.problem, self.mesh, self.degree, t, self.eps, self.n_quad)
        if s is not None:
            out += s.coeffs.ravel()
        return out

    def implicit(self, x):
        if self.solver is None:
            return np.zeros_like(x)
        return self.solver.apply(x)

    def derivative(self, x, t):
        """Nodal time derivative ``-f_h(u) + eps A_h(u) + s_h(t)``."""
        return self.explicit(x, t) + self.implicit(x)


def imex_step(x, t, tau, op, tableau):
    """Advance the raveled state ``x`` from ``t`` to ``t + tau``.

    ``op`` provides ``explicit(x, t)``, ``implicit(x)`` and ``solver``
    (``None`` when there is no implicit part, in which case only the explicit
    tableau is used).
    """
    if tau <= 0:
        raise ConfigurationError("time step must be positive")
    s = tableau.stages
    Ae, Ai, c = tableau.A_exp, tableau.A_imp, tableau.c_exp
    implicit = op.solver is not None
    ke, ki = [], []
    for i in range(s):
        rhs = x.copy()
        for j in range(i):
            if Ae[i, j]:
                rhs += tau * Ae[i, j] * ke[j]
            if implicit and Ai[i, j]:
                rhs += tau * Ai[i, j] * ki[j]
        if implicit and Ai[i, i]:
            U = op.solver.solve(tau * Ai[i, i], rhs)
        else:
            U = rhs
        ke.append(op.explicit(U, t + c[i] * tau))
        if implicit:
            ki.append(op.implicit(U))
    out = x.copy()
    for j in range(s):
        if tableau.bt[j]:
            out += tau * tableau.bt[j] * ke[j]
        if implicit and tableau.b[j]:
            out += tau * tableau.b[j] * ki[j]
    return out


def time_step(h, q, lambda_max, C_adv=0.1):
    """``dt = C_adv h / ((2q + 1) lambda_max)``."""
    return C_adv * h / ((2 * q + 1) * lambda_max)


def time_grid(T, dt):
    """Uniform nodes with a shortened final step landing exactly on ``T``."""
    n = max(1, ceil(T / dt - 1e-9))
    t = np.minimum(np.arange(n + 1) * dt, T)
    t[-1] = T
    return t


@dataclass
class TrajectoryRecord:
    """Nodal values and nodal time derivatives of a fully discrete run."""

    mesh: CartesianMesh
    degree: int
    n_components: int
    eps: float
    times: list = field(default_factory=list)
    values: list = field(default_factory=list)
    derivatives: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, t, u, w):
        self.times.append(float(t))
        self.values.append(u)
        self.derivatives.append(w)

    def __len__(self):
        return len(self.times)

    def field(self, n, derivative=False):
        data = (self.derivatives if derivative else self.values)[n]
        shape = (self.n_components,) + self.mesh.shape + (self.degree + 1,) * self.mesh.dim
        return DgField(self.mesh, self.degree, self.n_components, data.reshape(shape))


def iterate_trajectory(problem, q, N, eps=0.0, T=None, C_adv=0.1, tableau=None,
                       penalty=None, n_quad=None, initial=None):
    """Generator over ``(t_n, u^n, w^n)`` with raveled coefficient vectors.

    The first item describes the run: a dict with the mesh, step size,
    number of steps, tableau and the semidiscrete operator.
    """
    mesh = CartesianMesh(problem.d, N)
    T = problem.final_time if T is None else float(T)
    tableau = tableau or tableau_for(q)
    op = SemiDiscreteOperator(problem, mesh, q, eps, penalty, n_quad)
    if initial is None:
        ex = exact_for(problem, eps)
        if ex is None:
            raise ConfigurationError(f"problem {problem.name!r} has no initial datum")
        initial = l2_project(lambda X: ex.value(0.0, X), mesh, q)
    dt = time_step(mesh.h, q, problem.lambda_max, C_adv)
    times = time_grid(T, dt)
    yield {"mesh": mesh, "dt": dt, "n_steps": len(times) - 1, "tableau": tableau.name,
           "operator": op, "times": times, "T": T}
    x = initial.coeffs.ravel().copy()
    yield times[0], x, op.derivative(x, times[0])
    for n in range(len(times) - 1):
        x = imex_step(x, times[n], times[n + 1] - times[n], op, tableau)
        yield times[n + 1], x, op.derivative(x, times[n + 1])


def run_trajectory(problem, q, N, eps=0.0, T=None, C_adv=0.1, tableau=None, penalty=None,
                   n_quad=None, initial=None):
    """Run to ``T`` and keep every node in a :class:`TrajectoryRecord`."""
    it = iterate_trajectory(problem, q, N, eps, T, C_adv, tableau, penalty, n_quad, initial)
    info = next(it)
    rec = TrajectoryRecord(info["mesh"], q, problem.m, float(eps),
                           meta={"problem": problem.name, "tableau": info["tableau"],
                                 "dt": info["dt"], "C_adv": C_adv, "T": info["T"]})
    rec.operator = info["operator"]
    for t, x, w in it:
        rec.append(t, x, w)
    return rec


def write_checkpoint(record, directory):
    """Dump every node as a field snapshot plus a JSON manifest."""
    os.makedirs(directory, exist_ok=True)
    files = []
    for n in range(len(record)):
        for kind, deriv in (("u", False), ("w", True)):
            name = f"{kind}_{n:06d}.bin"
            save_field(os.path.join(directory, name), record.field(n, deriv), record.times[n])
            files.append(name)
    manifest = {
        "problem": record.meta.get("problem"),
        "tableau": record.meta.get("tableau"),
        "dt_rule": {"C_adv": record.meta.get("C_adv"), "dt": record.meta.get("dt"),
                    "formula": "C_adv * h / ((2q + 1) * lambda_max)"},
        "eps": record.eps, "q": record.degree, "N": record.mesh.N,
        "times": record.times, "files": files,
    }
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest
