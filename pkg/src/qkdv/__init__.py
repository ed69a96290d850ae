"""Local-in-time KdV solutions with quasi-periodic data via Fourier-coefficient Picard iteration."""

__version__ = "0.1.0"

from .errors import (BudgetExceeded, DegeneratePhaseError, EnvelopeBudgetExceeded,
                     HorizonExceeded, InconsistentInitialData, InvalidArgument, NoContraction,
                     QkdvError, TermBudgetExceeded, UnresolvedRootCluster)
from .exp_poly import ExpPoly, ep_derivative_t, ep_eval, ep_multiply, ep_outer_integral
from .lattice import CoeffField, FrequencyVector, convolve, random_hermitian, synthesize
from .picard import SolverConfig, SolutionTrajectory, chain, horizon, solve
from .reference import rk4_integrate, rk4_samples
from .spectral import band_edges, hill_discriminant, isospectrality_check
from .trees import tree_sum_all, tree_sum_ck
from .uniqueness import TrajectoryPair, assert_unique

__all__ = [
    "__version__", "QkdvError", "InvalidArgument", "DegeneratePhaseError", "BudgetExceeded",
    "TermBudgetExceeded", "HorizonExceeded", "NoContraction", "UnresolvedRootCluster",
    "InconsistentInitialData", "EnvelopeBudgetExceeded", "ExpPoly", "ep_multiply", "ep_eval",
    "ep_derivative_t", "ep_outer_integral", "CoeffField", "FrequencyVector", "convolve",
    "synthesize", "random_hermitian", "SolverConfig", "SolutionTrajectory", "solve", "horizon",
    "chain", "rk4_integrate", "rk4_samples", "hill_discriminant", "band_edges",
    "isospectrality_check", "tree_sum_all", "tree_sum_ck", "TrajectoryPair", "assert_unique",
]
