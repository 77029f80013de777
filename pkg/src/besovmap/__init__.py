"""MAP estimation for inverse problems with sparsity-promoting B^s_1 Besov priors."""

__version__ = "0.1.0"

from .forward import ForwardProblem, Observation, potential, potential_gradient
from .prior import BesovParams, CoefficientField, besov_norm, sample_prior
from .solver import MapResult, SolverConfig, solve_map

__all__ = [
    "BesovParams",
    "CoefficientField",
    "ForwardProblem",
    "MapResult",
    "Observation",
    "SolverConfig",
    "besov_norm",
    "potential",
    "potential_gradient",
    "sample_prior",
    "solve_map",
]
