"""Difference potentials solver for 3D chemotaxis on a ball."""
from .decomposition import SubdomainSetup, setup_case1, setup_case2, setup_single
from .kernels import BACKEND_NAME
from .mesh import build_grid, classify_points
from .poisson import make_plan, solve_ap
from .runner import RunConfig, Simulation, run
from .scheme import ModelParams

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "ModelParams",
    "RunConfig",
    "Simulation",
    "SubdomainSetup",
    "build_grid",
    "classify_points",
    "make_plan",
    "run",
    "setup_case1",
    "setup_case2",
    "setup_single",
    "solve_ap",
]
