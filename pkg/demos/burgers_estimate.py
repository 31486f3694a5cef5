"""A posteriori bound for viscous Burgers on a coarse mesh.

Solve the manufactured Burgers problem with q = 1 on a 16 x 16 mesh,
reconstruct in space and time, and compare the computable bound with the
true error.  The ratio bound / error is the effectivity of the estimator.
"""
from dgsiac import run_estimate

rep = run_estimate("burgers", q=1, N=16, eps=1e-4)
n = rep.norms

print(f"steps                  {rep.meta['n_steps']}")
print(f"||r1||_L1(L2)          {n.r1_L1L2:.3e}")
print(f"E_r2                   {n.E_r2:.3e}")
print(f"initial error          {n.init_L2:.3e}")
print(f"Lambda                 {rep.constants.Lambda:.3f}")
print(f"bound                  {rep.bound:.3e}")
print(f"measured error^2       {rep.lhs:.3e}")
print(f"effectivity            {rep.ratio:.1f}")
for w in rep.warnings:
    print("note:", w)
