"""SIAC filtering of a projected sine wave.

The L2 projection onto piecewise polynomials of degree q converges like
h^(q+1).  Convolving it with the SIAC kernel of the same q gives a smooth
piecewise polynomial that is much closer to the projected function.  The
error is printed on a fine sample grid for a few mesh sizes, with the
observed orders.
"""
import numpy as np

from dgsiac import CartesianMesh, compute_eoc, l2_project, scaled_kernel, siac_convolve
from dgsiac.mesh import evaluate_points


def u(X):
    return np.sin(2 * np.pi * X[0])


x = (np.arange(997) + 0.5) / 997
exact = np.sin(2 * np.pi * x)

for q in (1, 2):
    print(f"q = {q}")
    print(f"{'N':>5} {'dG error':>11} {'EoC':>6} {'SIAC error':>11} {'EoC':>6}")
    prev = None
    for N in (8, 16, 32, 64):
        mesh = CartesianMesh(1, N)
        uh = l2_project(u, mesh, q)
        filtered = siac_convolve(uh, scaled_kernel(q, mesh.h))
        e_dg = np.abs(evaluate_points(uh, x[:, None])[0] - exact).max()
        e_f = np.abs(filtered(x[:, None])[0] - exact).max()
        if prev is None:
            rates = ("", "")
        else:
            rates = (f"{compute_eoc(prev[0], e_dg, 2 / N, 1 / N):6.2f}",
                     f"{compute_eoc(prev[1], e_f, 2 / N, 1 / N):6.2f}")
        print(f"{N:5d} {e_dg:11.3e} {rates[0]:>6} {e_f:11.3e} {rates[1]:>6}")
        prev = (e_dg, e_f)
