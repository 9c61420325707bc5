"""Self-intersection local times of lattice random walks.

Simulation, exact small-n enumeration, Fourier-side return probabilities,
variance bound functionals and the asymptotic constants of Var(L_n(alpha)).
"""
__version__ = "0.1.0"

from .walks import (  # noqa: E402
    DistributionError,
    IncrementDistribution,
    RngStream,
    characteristic_function,
    make_distribution,
    sample_increment,
    symmetrize,
)
from .occupation import OccupationMap, brute_force_L, run_walk  # noqa: E402

__all__ = [
    "DistributionError",
    "IncrementDistribution",
    "OccupationMap",
    "RngStream",
    "brute_force_L",
    "characteristic_function",
    "make_distribution",
    "run_walk",
    "sample_increment",
    "symmetrize",
]
