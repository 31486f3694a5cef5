"""Discontinuous Galerkin solvers with SIAC reconstruction and a posteriori bounds.

The usual entry point is :func:`run_estimate`, which solves one problem,
reconstructs the solution in space and time, integrates the residuals and
assembles the error bound.  :func:`run_sweep` repeats that over a grid of
mesh sizes and viscosities and writes the convergence tables.
"""
from .bspline import SiacKernel, central_bspline, kernel_coefficients, scaled_kernel
from .errors import (ConfigurationError, DegenerateStencilError, DgsiacError,
                     InadmissibleStateError, SolverError)
from .estimators import EstimatorReport, run_estimate
from .harness import RunConfig, compute_eoc, run_sweep
from .mesh import CartesianMesh, DgField, l2_project
from .problems import PROBLEMS, exact_for, get_problem
from .reconstruction import TemporalReconstruction, siac_convolve, spacetime_reconstruction
from .residual import NormAccumulator, ResidualField
from .timestepping import run_trajectory

__version__ = "0.1.0"

__all__ = [
    "CartesianMesh", "ConfigurationError", "DegenerateStencilError", "DgField", "DgsiacError",
    "EstimatorReport", "InadmissibleStateError", "NormAccumulator", "PROBLEMS",
    "ResidualField", "RunConfig", "SiacKernel", "SolverError", "TemporalReconstruction",
    "central_bspline", "compute_eoc", "exact_for", "get_problem", "kernel_coefficients",
    "l2_project", "run_estimate", "run_sweep", "run_trajectory", "scaled_kernel",
    "siac_convolve", "spacetime_reconstruction",
]
