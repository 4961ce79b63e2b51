"""Mean field game solver: Lagrange-Galerkin Fokker-Planck, semi-Lagrangian HJB,
an LQ closed-form oracle and a convergence-study harness."""

__version__ = "0.1.0"

from .grid import UniformGrid, interpolate, simpson_integrate
from .mfg import MFGProblem, MFGSolution, mfg_solve

__all__ = ["UniformGrid", "interpolate", "simpson_integrate", "MFGProblem", "MFGSolution", "mfg_solve"]
