"""Low-density spreading for uplink NOMA.

Deterministic-equivalent ergodic mutual information, load-balancing sparse
code allocation, and Monte-Carlo validation over Rayleigh fading.
"""

from .model import (RandomStream, Scenario, SpreadingMatrix, db_to_linear,
                    linear_to_db, make_drop, sample_channel)
from .detequiv import (ConvergenceError, FixedPointSolution, OptimalityCertificate,
                       certificate, det_emi, optimal_det_emi, solve_fixed_point,
                       solve_r_star)
from .allocator import (Fragment, brute_force_partition, dense_spreading,
                        greedy_assign, greedy_partition, random_spreading,
                        regular_spreading)
from .montecarlo import (EpsilonStats, MCEstimate, epsilon_stats, logdet_hermitian,
                         mc_emi, mc_emi_many)

__version__ = "0.1.0"

__all__ = [
    "RandomStream",
    "Scenario",
    "SpreadingMatrix",
    "db_to_linear",
    "linear_to_db",
    "make_drop",
    "sample_channel",
    "ConvergenceError",
    "FixedPointSolution",
    "OptimalityCertificate",
    "certificate",
    "det_emi",
    "optimal_det_emi",
    "solve_fixed_point",
    "solve_r_star",
    "Fragment",
    "brute_force_partition",
    "dense_spreading",
    "greedy_assign",
    "greedy_partition",
    "random_spreading",
    "regular_spreading",
    "EpsilonStats",
    "MCEstimate",
    "epsilon_stats",
    "logdet_hermitian",
    "mc_emi",
    "mc_emi_many",
]
