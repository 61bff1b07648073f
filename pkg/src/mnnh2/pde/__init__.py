"""Solvers and dataset generators for the 1D NLSE, slab RTE and Kohn-Sham maps."""

from .dataset import SampleError, generate_dataset
from .expint import exp1, exp_integral_ei
from .ks import DegenerateGapError, solve_ks, solve_ks_states
from .nlse import ConvergenceError, solve_nlse
from .problems import GaussianMixture, ProblemSpec, SamplingError, draw_mixture, sample_potential
from .rte import SingularSystemError, solve_rte_1d

__all__ = [
    "ConvergenceError", "DegenerateGapError", "GaussianMixture", "ProblemSpec", "SampleError",
    "SamplingError", "SingularSystemError", "draw_mixture", "exp1", "exp_integral_ei",
    "generate_dataset", "sample_potential", "solve_ks", "solve_ks_states", "solve_nlse", "solve_rte_1d",
]
